"""First-order conic solver: operator splitting on the homogeneous self-dual
embedding.

The program ``min c@x  s.t.  A@x = b, x in K`` and its dual are folded into
the skew system ``v = Q u`` with ``u = (x, y, tau)`` constrained to
``K x R^m x R+``.  Each iteration solves one cached linear system and
projects onto the cone product; infeasible and unbounded problems surface as
certificates instead of solutions.  Everything is deterministic: fixed
iteration order, no randomized scaling.

Scaling: rows and columns of [A; c'] are Ruiz-equilibrated (uniformly per
PSD block, which preserves the cone), so a swapped objective triggers one
cheap refactorization; the warm-start state is kept in original coordinates
and mapped into whatever scaling is current.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .program import FREE, NONNEG, PSD, ConicProgram, ConicSolution

__all__ = ["SplittingSolver", "solve"]

DEFAULT_TOL_FEAS = 1e-7
DEFAULT_TOL_GAP = 1e-6
DEFAULT_MAX_ITERS = 200_000


def _ruiz_scales(a_mat: sp.csr_matrix, c: np.ndarray, blocks, iters: int = 15):
    """Equilibrate [A; c'] with per-PSD-block-uniform column scales.

    Returns (d_row, d_col, c_scale): A_hat = diag(d_row) A diag(d_col) and
    c_hat = c_scale * (d_col * c).
    """
    m, n = a_mat.shape
    d_row = np.ones(m)
    d_col = np.ones(n)
    c_scale = 1.0
    work = a_mat.copy().tocsr()
    c_work = c.copy()
    psd_groups = [slice(b.offset, b.offset + b.size)
                  for b in blocks if b.kind == PSD]
    for _ in range(iters):
        abs_work = abs(work)
        row_max = abs_work.max(axis=1).toarray().ravel()
        col_max = abs_work.max(axis=0).toarray().ravel()
        col_max = np.maximum(col_max, np.abs(c_work))
        c_row_max = np.abs(c_work).max() if c_work.size else 0.0
        row_max[row_max == 0.0] = 1.0
        col_max[col_max == 0.0] = 1.0
        if c_row_max == 0.0:
            c_row_max = 1.0
        for sl in psd_groups:
            col_max[sl] = col_max[sl].max()
        r = 1.0 / np.sqrt(row_max)
        cc = 1.0 / np.sqrt(col_max)
        cr = 1.0 / np.sqrt(c_row_max)
        d_row *= r
        d_col *= cc
        c_scale *= cr
        work = sp.diags(r) @ work @ sp.diags(cc)
        c_work = cr * (c_work * cc)
        if max(abs(1.0 - row_max.max()), abs(1.0 - col_max.max()),
               abs(1.0 - c_row_max)) < 1e-3:
            break
    return d_row, d_col, c_scale


class SplittingSolver:
    """Reusable solver bound to one program's constraint structure.

    ``set_objective`` swaps the cost (with a refactorization under the new
    equilibration); the last solution warm-starts the next ``solve`` unless
    ``warm=False``.  This is the access pattern of alternating outer loops.
    """

    def __init__(self, prog: ConicProgram, tol_feas: float = DEFAULT_TOL_FEAS,
                 tol_gap: float = DEFAULT_TOL_GAP,
                 max_iters: int = DEFAULT_MAX_ITERS,
                 alpha: float = 1.5, check_interval: int = 25,
                 ruiz_iters: int = 15):
        self.prog = prog
        self.tol_feas = float(tol_feas)
        self.tol_gap = float(tol_gap)
        self.max_iters = int(max_iters)
        self.alpha = float(alpha)
        self.check_interval = int(check_interval)
        self.ruiz_iters = int(ruiz_iters)

        self.n = prog.num_vars
        self.m = prog.num_rows

        # composite cone: program blocks, then free duals, then tau
        kinds, params = prog.cone_layout()
        self._kinds = np.concatenate([kinds, [FREE, NONNEG]]).astype(np.int32)
        self._params = np.concatenate([params, [self.m, 1]]).astype(np.int32)
        self._step = _kernels.make_stepper(self._kinds, self._params)

        self._warm = None            # (x, y, z) in original coordinates
        self.set_objective(prog.c)

    # -- objective / state management ---------------------------------------

    def set_objective(self, c: np.ndarray) -> None:
        """Swap the linear objective and re-equilibrate around it."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n,):
            raise ValueError("objective length mismatch")
        self._c = c.copy()
        self._d_row, self._d_col, c_scale = _ruiz_scales(
            self.prog.a_mat.tocsr(), c, self.prog.blocks, self.ruiz_iters)
        self._a_sc = (sp.diags(self._d_row) @ self.prog.a_mat
                      @ sp.diags(self._d_col)).tocsc()
        b_sc = self._d_row * self.prog.b
        self._sb = max(1.0, float(np.linalg.norm(b_sc)))
        self._b_hat = b_sc / self._sb
        c_sc = c_scale * (self._d_col * c)
        self._sc = max(1.0, float(np.linalg.norm(c_sc))) / c_scale
        self._c_hat = (self._d_col * c) / self._sc

        eye_n = sp.eye(self.n, format="csc")
        eye_m = sp.eye(self.m, format="csc")
        k_mat = sp.bmat([[eye_n, self._a_sc.T], [self._a_sc, -eye_m]],
                        format="csc")
        self._lu = spla.splu(k_mat)
        self._h = np.concatenate([self._c_hat, -self._b_hat])
        self._g = self._msolve(self._h)
        self._denom = 1.0 + float(self._h @ self._g)

    def reset_state(self) -> None:
        self._warm = None

    # -- internals -----------------------------------------------------------

    def _msolve(self, r: np.ndarray) -> np.ndarray:
        """Solve [[I, -As^T], [As, I]] zeta = r via the cached LU.

        With K = [[I, As^T], [As, -I]] and K w = r the solution is
        (w1, -w2): negate only the second block of the output.
        """
        out = self._lu.solve(r)
        out[self.n:] *= -1.0
        return out

    def _linsolve(self, w: np.ndarray) -> np.ndarray:
        """Apply (I + Q)^{-1} using the rank-one border update."""
        w_xy = w[:-1]
        w_t = w[-1]
        q = self._msolve(w_xy - self._h * w_t)
        p = q - self._g * (float(self._h @ q) / self._denom)
        tau = w_t + float(self._h @ p)
        return np.concatenate([p, [tau]])

    def _unscaled_point(self, u: np.ndarray, v: np.ndarray, tau: float):
        x_hat = u[: self.n] / tau
        y_hat = u[self.n: self.n + self.m] / tau
        z_hat = v[: self.n] / tau
        x = self._sb * (self._d_col * x_hat)
        y = self._sc * (self._d_row * y_hat)
        z = self._sc * (z_hat / self._d_col)
        return x, y, z

    def _scaled_start(self):
        """Map the stored original-coordinate solution into current scaling."""
        x, y, z = self._warm
        total = self.n + self.m + 1
        u = np.zeros(total)
        v = np.zeros(total)
        u[: self.n] = x / (self._sb * self._d_col)
        u[self.n: -1] = y / (self._sc * self._d_row)
        u[-1] = 1.0
        v[: self.n] = (z * self._d_col) / self._sc
        return u, v

    def _residuals(self, x, y, z):
        prog = self.prog
        pres = np.linalg.norm(prog.a_mat @ x - prog.b)
        pres /= 1.0 + np.linalg.norm(prog.b)
        dres = np.linalg.norm(prog.a_mat.T @ y + z - self._c)
        dres /= 1.0 + np.linalg.norm(self._c)
        pobj = float(self._c @ x)
        dobj = float(prog.b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        return pres, dres, gap, pobj, dobj

    def _certificates(self, u, v, tol):
        """Check unbounded-ray and infeasibility certificates."""
        x_ray = self._d_col * u[: self.n]
        cx = float(self._c @ x_ray)
        if cx < -1e-12:
            x_bar = x_ray / (-cx)
            res = np.linalg.norm(self.prog.a_mat @ x_bar)
            if res <= tol:
                return "unbounded", {"x_ray": x_bar, "residual": float(res)}
        y_ray = self._d_row * u[self.n: self.n + self.m]
        by = float(self.prog.b @ y_ray)
        if by > 1e-12:
            y_bar = y_ray / by
            w = -(self.prog.a_mat.T @ y_bar)
            kinds, params = self.prog.cone_layout()
            w_proj = _kernels.project_dual(w, kinds, params)
            res = np.linalg.norm(w_proj - w)
            if res <= tol:
                return "infeasible", {"y_ray": y_bar, "residual": float(res)}
        return None, None

    # -- main entry ----------------------------------------------------------

    def solve(self, warm: bool = True, trace: list = None) -> ConicSolution:
        n, m = self.n, self.m
        total = n + m + 1
        if not warm or self._warm is None:
            u = np.zeros(total)
            v = np.zeros(total)
            u[-1] = 1.0
            v[-1] = 1.0
        else:
            u, v = self._scaled_start()

        best = None
        status = "max-iters"
        cert = None
        it = 0
        t0 = time.perf_counter()
        while it < self.max_iters:
            stop = min(self.check_interval, self.max_iters - it)
            for _ in range(stop):
                utilde = self._linsolve(u + v)
                self._step(u, v, utilde, self.alpha)
            it += stop

            tau = u[-1]
            if tau > 1e-10:
                x, y, z = self._unscaled_point(u, v, tau)
                pres, dres, gap, pobj, dobj = self._residuals(x, y, z)
                err = max(pres, dres, gap)
                if trace is not None:
                    trace.append((it, pres, dres, gap, tau, float(v[-1])))
                if best is None or err < best[0]:
                    best = (err, x, y, z, pres, dres, gap, pobj, dobj, it)
                if pres <= self.tol_feas and dres <= self.tol_feas \
                        and gap <= self.tol_gap:
                    status = "optimal"
                    break
            kind, info = self._certificates(u, v, self.tol_feas)
            if kind is not None:
                status = kind
                cert = info
                break

        elapsed = time.perf_counter() - t0

        if status in ("infeasible", "unbounded"):
            zero = np.zeros(0)
            return ConicSolution(
                status=status, x=zero, y=cert.get("y_ray", zero),
                z=zero, objective=np.nan, dual_objective=np.nan,
                primal_residual=np.nan, dual_residual=np.nan, gap=np.nan,
                iterations=it, program=self.prog, certificate=cert,
            )
        if best is None:
            # tau never cleared the floor and no certificate fired
            return ConicSolution(
                status="max-iters", x=np.zeros(n), y=np.zeros(m),
                z=np.zeros(n), objective=np.nan, dual_objective=np.nan,
                primal_residual=np.inf, dual_residual=np.inf, gap=np.inf,
                iterations=it, program=self.prog,
                certificate={"solve_time": elapsed},
            )
        err, x, y, z, pres, dres, gap, pobj, dobj, best_it = best
        self._warm = (x, y, z)
        return ConicSolution(
            status=status, x=x, y=y, z=z,
            objective=pobj + self.prog.obj_offset,
            dual_objective=dobj + self.prog.obj_offset,
            primal_residual=pres, dual_residual=dres, gap=gap,
            iterations=it, program=self.prog,
            certificate={"solve_time": elapsed, "best_iteration": best_it},
        )


def solve(prog: ConicProgram, tol_feas: float = DEFAULT_TOL_FEAS,
          tol_gap: float = DEFAULT_TOL_GAP,
          max_iters: int = DEFAULT_MAX_ITERS) -> ConicSolution:
    """One-shot solve of a canonical conic program."""
    return SplittingSolver(prog, tol_feas=tol_feas, tol_gap=tol_gap,
                           max_iters=max_iters).solve(warm=False)
