"""Command-line surface: build networks, run designs, sweep uncertainty
scenarios, and emit analysis tables.

Exit codes: 0 success, 1 parse/IO failure, 2 infeasible or unstable,
3 outer-iteration limit.  Every flag can also be set through an environment
variable with the ``SPARSEGAIN_`` prefix (flags win), e.g.
``SPARSEGAIN_LAMBDA2=0.2``.  All generator/link indices are 0-based.
"""

from __future__ import annotations

import argparse
import json
import os
import sys as _sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, power
from .sparsifier import SparsifierOptions, sparsify
from .lmi import certify_gain
from .uncertain import StructureSet, UncertainLti, closed_loop_data

ENV_PREFIX = "SPARSEGAIN_"

CSV_VERSION = "# sparsegain-csv-v1"


def _write_atomic(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(name: str, header: list, rows: list) -> str:
    lines = [f"{CSV_VERSION} {name}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _matrix_csv(name: str, mat: np.ndarray) -> str:
    header = [f"c{j}" for j in range(mat.shape[1])]
    return _csv_text(name, header, mat.tolist())


def _env_default(name: str, fallback):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return fallback
    if isinstance(fallback, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(fallback, int):
        return int(raw)
    if isinstance(fallback, float) or fallback is None:
        try:
            return float(raw)
        except (TypeError, ValueError):
            return raw
    return raw


def _load_system(args) -> UncertainLti:
    if args.system:
        sys_model = UncertainLti.load(args.system)
    elif args.network:
        net = power.PowerNetwork.load(args.network)
        sys_model = power.swing_model(net)
    else:
        raise FileNotFoundError("need --system or --network")
    return sys_model


def _attach_link(sys_model: UncertainLti, args) -> UncertainLti:
    if getattr(args, "link", None):
        if not args.network:
            raise ValueError("--link requires --network")
        net = power.PowerNetwork.load(args.network)
        i1, i2 = _parse_link(args.link)
        rho_rel = args.rho_rel if args.rho_rel is not None else 0.0
        return power.link_uncertainty(net, i1, i2, rho_rel).apply(sys_model)
    return sys_model


def _parse_link(text: str) -> tuple:
    parts = text.replace("-", ",").split(",")
    if len(parts) != 2:
        raise ValueError(f"bad link spec {text!r}; expected i-j")
    return int(parts[0]), int(parts[1])


def _options_from_args(args) -> SparsifierOptions:
    return SparsifierOptions(
        lambda1=args.lambda1, lambda2=args.lambda2, nu=args.nu, xi=args.xi,
        eps_star=args.eps_star, truncation_threshold=args.truncate,
        reweight_iters=args.reweight_iters,
        max_outer_iters=args.max_outer_iters,
    )


def _gain_for(sys_model: UncertainLti, args) -> np.ndarray:
    if getattr(args, "gain", None):
        with open(args.gain) as fh:
            return np.asarray(json.load(fh)["K"], dtype=float)
    return power.lqr_baseline(sys_model)


def _report(sys_model, k_hat, result, seed) -> dict:
    data = closed_loop_data(sys_model, k_hat)
    cert = certify_gain(data, result.gain)
    metrics = analysis.deviation_metrics(sys_model, k_hat, result.gain)
    robust = analysis.sample_uncertainty(sys_model, result.gain, count=200,
                                         seed=seed, k_hat=k_hat)
    return {
        "format": "sparsegain-report-v1",
        "status": result.status,
        "iterations": result.iterations,
        "gain_nnz": int(np.count_nonzero(result.gain)),
        "reference_nnz": int(np.count_nonzero(k_hat)),
        "metrics": {
            "r2": metrics.r2,
            "r_inf": metrics.r_inf,
            "cardinality_ratio": metrics.cardinality_ratio,
        },
        "certified": {
            "h2_squared": cert.h2_squared,
            "hinf": cert.hinf,
            "h2_status": cert.h2_status,
            "hinf_status": cert.hinf_status,
        },
        "rank_certificate": result.certificate,
        "robustness": robust,
        "in_loop": {"h2_level": result.h2_level,
                    "hinf_level": result.hinf_level},
    }


# -- subcommands ----------------------------------------------------------------

def cmd_netgen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for name, builder in (("net3", power.synthetic_net3),
                          ("net10", power.synthetic_net10)):
        net = builder()
        path = os.path.join(args.out, f"{name}.json")
        _write_atomic(path, json.dumps(net.to_json(), indent=1))
        print(path)
    return 0


def cmd_design(args) -> int:
    sys_model = _attach_link(_load_system(args), args)
    k_hat = _gain_for(sys_model, args)
    opts = _options_from_args(args)
    structure = None
    if args.structure:
        with open(args.structure) as fh:
            structure = StructureSet.from_json(json.load(fh))
    result = sparsify(sys_model, k_hat, structure=structure, options=opts)
    if result.status == "infeasible":
        print(f"infeasible (dominant constraint family: "
              f"{result.infeasible_family})", file=_sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    _write_atomic(os.path.join(args.out, "K.json"),
                  json.dumps({"format": "sparsegain-gain-v1",
                              "K": result.gain.tolist()}, indent=1))
    _write_atomic(os.path.join(args.out, "K.csv"),
                  _matrix_csv("gain", result.gain))
    import io

    buf = io.StringIO()
    result.history_csv(buf)
    _write_atomic(os.path.join(args.out, "history.csv"), buf.getvalue())
    report = _report(sys_model, k_hat, result, args.seed)
    _write_atomic(os.path.join(args.out, "report.json"),
                  json.dumps(report, indent=1))
    print(json.dumps({"status": result.status,
                      "gain_nnz": report["gain_nnz"],
                      "r2": report["metrics"]["r2"],
                      "r_inf": report["metrics"]["r_inf"]}))
    return 0 if result.status == "converged" else 3


def _sweep_case(payload):
    """One (link, rho_rel) case; runs in a worker process."""
    (net_doc, i1, i2, rho_rel, opts_kw, seed) = payload
    net = power.PowerNetwork.from_json(net_doc)
    sys_model = power.uncertain_swing_model(net, i1, i2, rho_rel)
    k_hat = power.lqr_baseline(sys_model)
    case_seed = int(np.random.SeedSequence([seed, i1, i2,
                                            int(rho_rel * 10**6)])
                    .generate_state(1)[0])
    result = sparsify(sys_model, k_hat, options=SparsifierOptions(**opts_kw))
    if result.status == "infeasible":
        return {"i1": i1, "i2": i2, "rho_rel": rho_rel, "ok": False,
                "error": f"infeasible:{result.infeasible_family}"}
    metrics = analysis.deviation_metrics(sys_model, k_hat, result.gain)
    robust = analysis.sample_uncertainty(sys_model, result.gain, count=100,
                                         seed=case_seed, k_hat=k_hat)
    ng = net.n_gen
    k_theta = result.gain[:, :ng]
    k_omega = result.gain[:, ng:]
    f_theta = analysis.link_density(k_theta)
    f_omega = analysis.link_density(k_omega)
    return {
        "i1": i1, "i2": i2, "rho_rel": rho_rel, "ok": True,
        "rho": sys_model.rho,
        "status": result.status,
        "gain_nnz": int(np.count_nonzero(result.gain)),
        "r2": metrics.r2, "r_inf": metrics.r_inf,
        "cardinality_ratio": metrics.cardinality_ratio,
        "worst_abscissa": robust["worst_abscissa"],
        "gain": result.gain.tolist(),
        "f_theta": f_theta.tolist(),
        "f_omega": f_omega.tolist(),
    }


def cmd_sweep(args) -> int:
    if not args.network:
        raise FileNotFoundError("sweep requires --network")
    net = power.PowerNetwork.load(args.network)
    links = [_parse_link(s) for s in args.links.split(";") if s] \
        if args.links else []
    rho_rels = [float(s) for s in args.rho_rel_list.split(",") if s] \
        if args.rho_rel_list else []
    cases = [(i1, i2, rr) for (i1, i2) in links for rr in rho_rels]
    os.makedirs(args.out, exist_ok=True)

    opts_kw = dict(lambda1=args.lambda1, lambda2=args.lambda2, nu=args.nu,
                   xi=args.xi, eps_star=args.eps_star,
                   truncation_threshold=args.truncate,
                   reweight_iters=args.reweight_iters,
                   max_outer_iters=args.max_outer_iters)
    payloads = [(net.to_json(), i1, i2, rr, opts_kw, args.seed)
                for (i1, i2, rr) in cases]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_case, payloads))
    else:
        results = [_sweep_case(p) for p in payloads]
    results.sort(key=lambda r: (r["i1"], r["i2"], r["rho_rel"]))

    header = ["i1", "i2", "rho_rel", "rho", "gain_nnz", "r2", "r_inf",
              "cardinality_ratio", "worst_abscissa", "status"]
    rows = []
    ng = net.n_gen
    f_grid = np.zeros((ng, ng))
    for res in results:
        if not res["ok"]:
            rows.append([res["i1"], res["i2"], res["rho_rel"],
                         "", "", "", "", "", "", res["error"]])
            continue
        rows.append([res[c] for c in header])
        case_dir = os.path.join(
            args.out, f"case_{res['i1']}_{res['i2']}_{res['rho_rel']:g}")
        os.makedirs(case_dir, exist_ok=True)
        _write_atomic(os.path.join(case_dir, "K.json"),
                      json.dumps({"format": "sparsegain-gain-v1",
                                  "K": res["gain"]}, indent=1))
        f_sum = np.asarray(res["f_theta"]) + np.asarray(res["f_omega"])
        _write_atomic(os.path.join(case_dir, "f_theta.csv"),
                      _matrix_csv("f_theta", np.asarray(res["f_theta"])))
        _write_atomic(os.path.join(case_dir, "f_omega.csv"),
                      _matrix_csv("f_omega", np.asarray(res["f_omega"])))
        i1, i2 = res["i1"], res["i2"]
        f_grid[i1, i2] = f_grid[i2, i1] = f_sum[i1, i2]
    _write_atomic(os.path.join(args.out, "sweep.csv"),
                  _csv_text("sweep", header, rows))
    _write_atomic(os.path.join(args.out, "f_grid.csv"),
                  _matrix_csv("f_grid", f_grid))
    print(f"{len(results)} case(s) -> {args.out}")
    return 0


def cmd_analyze(args) -> int:
    sys_model = _attach_link(_load_system(args), args)
    k_hat = _gain_for(sys_model, args)
    if args.gain:
        with open(args.gain) as fh:
            k = np.asarray(json.load(fh)["K"], dtype=float)
    else:
        k = k_hat
    a_ref = sys_model.closed_a(k_hat)
    a_new = sys_model.closed_a(k)
    for name, mat in (("reference", a_ref), ("candidate", a_new)):
        alpha = float(np.max(np.linalg.eigvals(mat).real))
        if alpha >= 0.0:
            print(f"{name} loop unstable: spectral abscissa {alpha:.3e}",
                  file=_sys.stderr)
            return 2

    os.makedirs(args.out, exist_ok=True)
    grid = analysis.default_grid()
    header = ["omega", "sigma_max", "sigma_min", "schatten2"]
    for name, a_mat in (("reference", a_ref), ("candidate", a_new)):
        fr = analysis.frequency_response(a_mat, sys_model.b2, sys_model.c, grid)
        rows = list(zip(fr.grid, fr.sigma_max, fr.sigma_min, fr.schatten2))
        _write_atomic(os.path.join(args.out, f"freq_{name}.csv"),
                      _csv_text(f"freq_{name}", header, rows))
    metrics = analysis.deviation_metrics(sys_model, k_hat, k)
    robust = analysis.sample_uncertainty(sys_model, k, count=200,
                                         seed=args.seed, k_hat=k_hat)
    _write_atomic(os.path.join(args.out, "metrics.json"), json.dumps({
        "format": "sparsegain-metrics-v1",
        "r2": metrics.r2,
        "r_inf": metrics.r_inf,
        "cardinality_ratio": metrics.cardinality_ratio,
    }, indent=1))
    _write_atomic(os.path.join(args.out, "robustness.json"),
                  json.dumps(robust, indent=1))
    print(json.dumps({"r2": metrics.r2, "r_inf": metrics.r_inf}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsegain",
        description=("Sparsify a pre-designed feedback gain for an uncertain "
                     "LTI system and certify the result."))
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--system", default=_env_default("system", None),
                       help="uncertain system JSON file")
        p.add_argument("--network", default=_env_default("network", None),
                       help="power network JSON file (swing model)")
        p.add_argument("--out", default=_env_default("out", "out"),
                       help="output directory")
        p.add_argument("--seed", type=int,
                       default=int(_env_default("seed", 0)))

    def design_opts(p):
        p.add_argument("--gain", default=_env_default("gain", None),
                       help="reference gain JSON ({'K': [[...]]}); "
                            "default: LQR baseline")
        p.add_argument("--structure", default=_env_default("structure", None),
                       help="admissible-structure JSON file")
        p.add_argument("--link", default=_env_default("link", None),
                       help="uncertain link 'i-j' (0-based, needs --network)")
        p.add_argument("--rho-rel", dest="rho_rel", type=float,
                       default=_env_default("rho_rel", None),
                       help="relative uncertainty for --link (e.g. 0.3)")
        p.add_argument("--lambda1", type=float,
                       default=float(_env_default("lambda1", 0.5)))
        p.add_argument("--lambda2", type=float,
                       default=float(_env_default("lambda2", 0.1)))
        p.add_argument("--nu", type=float,
                       default=float(_env_default("nu", 100.0)))
        p.add_argument("--xi", type=float,
                       default=float(_env_default("xi", 1e-6)))
        p.add_argument("--eps-star", dest="eps_star", type=float,
                       default=float(_env_default("eps_star", 1e-2)))
        p.add_argument("--truncate", type=float,
                       default=float(_env_default("truncate", 5e-5)))
        p.add_argument("--reweight-iters", dest="reweight_iters", type=int,
                       default=int(_env_default("reweight_iters", 5)))
        p.add_argument("--max-outer-iters", dest="max_outer_iters", type=int,
                       default=int(_env_default("max_outer_iters", 200)))

    p_net = sub.add_parser("netgen", help="write the bundled synthetic "
                                          "demonstration networks")
    p_net.add_argument("--out", default=_env_default("out", "out"))
    p_net.set_defaults(func=cmd_netgen)

    p_design = sub.add_parser("design", help="run the sparsification")
    common(p_design)
    design_opts(p_design)
    p_design.set_defaults(func=cmd_design)

    p_sweep = sub.add_parser("sweep", help="sweep links x uncertainty levels")
    common(p_sweep)
    design_opts(p_sweep)
    p_sweep.add_argument("--links", default=_env_default("links", ""),
                         help="semicolon-separated links, e.g. '0-1;1-2'")
    p_sweep.add_argument("--rho-rel-list", dest="rho_rel_list",
                         default=_env_default("rho_rel_list", ""),
                         help="comma-separated levels, e.g. '0,0.1,0.3'")
    p_sweep.add_argument("--jobs", type=int,
                         default=int(_env_default("jobs", os.cpu_count() or 1)))
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="frequency response, deviation "
                                          "metrics and robustness sampling")
    common(p_an)
    p_an.add_argument("--gain", default=_env_default("gain", None))
    p_an.add_argument("--link", default=_env_default("link", None))
    p_an.add_argument("--rho-rel", dest="rho_rel", type=float,
                      default=_env_default("rho_rel", None))
    p_an.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
