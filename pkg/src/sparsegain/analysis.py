"""Ground-truth certification independent of the LMI machinery.

H2 norms come from the controllability Gramian, Hinf norms from bisection on
the Hamiltonian imaginary-axis test, robustness from sampling the admissible
uncertainty set, and frequency responses from direct resolvent evaluation.
None of it shares code paths with the semidefinite certificates it checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matops import is_hurwitz, solve_lyapunov, spectral_abscissa
from .uncertain import AugmentedSystem, UncertainLti, augment

__all__ = [
    "DeviationMetrics",
    "FrequencyResponse",
    "default_grid",
    "deviation_metrics",
    "frequency_response",
    "h2_norm",
    "hinf_norm",
    "link_density",
    "sample_uncertainty",
]


def h2_norm(a, b, c) -> float:
    """sqrt(Tr(C X C^T)) with X the controllability Gramian of (A, B)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    x = solve_lyapunov(a, b @ b.T)
    val = float(np.trace(c @ x @ c.T))
    return float(np.sqrt(max(val, 0.0)))


def _has_imaginary_hamiltonian_eig(a, b, c, gamma: float) -> bool:
    """True when the gamma-Hamiltonian has an imaginary-axis eigenvalue,
    i.e. gamma does not exceed the Hinf norm."""
    n = a.shape[0]
    ham = np.block([
        [a, (b @ b.T) / gamma],
        [-(c.T @ c) / gamma, -a.T],
    ])
    lam = np.linalg.eigvals(ham)
    scale = max(1.0, np.abs(lam).max())
    return bool(np.any(np.abs(lam.real) <= 1e-9 * scale))


def hinf_norm(a, b, c, tol: float = 1e-6) -> float:
    """Peak gain over frequency via bisection on the Hamiltonian test."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    ok, alpha = is_hurwitz(a)
    if not ok:
        raise ValueError(f"A is not Hurwitz (spectral abscissa {alpha:.3e})")
    if not b.size or not c.size or not np.any(b) or not np.any(c):
        return 0.0
    # lower bound: response at zero and at the eigenfrequencies of A
    lo = np.linalg.norm(c @ np.linalg.solve(-a, b), 2)
    for lam in np.linalg.eigvals(a):
        w = abs(lam.imag)
        if w > 0.0:
            g = c @ np.linalg.solve(1j * w * np.eye(a.shape[0]) - a, b)
            lo = max(lo, np.linalg.norm(g, 2))
    lo = max(lo, 1e-12)
    hi = 2.0 * lo
    while _has_imaginary_hamiltonian_eig(a, b, c, hi):
        hi *= 2.0
        if hi > 1e16:
            raise RuntimeError("Hinf bisection failed to bracket")
    lo_b = lo
    while (hi - lo_b) > tol * hi:
        mid = 0.5 * (lo_b + hi)
        if _has_imaginary_hamiltonian_eig(a, b, c, mid):
            lo_b = mid
        else:
            hi = mid
    return float(hi)


def default_grid(lo: float = 1e-2, hi: float = 1e3, points: int = 400) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), points)


@dataclass
class FrequencyResponse:
    grid: np.ndarray
    sigma_max: np.ndarray
    sigma_min: np.ndarray
    schatten2: np.ndarray


def frequency_response(a, b, c, grid=None) -> FrequencyResponse:
    """Extreme singular values and Frobenius norm of C (jwI - A)^{-1} B."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0.0):
        raise ValueError("grid must be nonempty with positive frequencies")
    n = a.shape[0]
    smax = np.empty(grid.size)
    smin = np.empty(grid.size)
    s2 = np.empty(grid.size)
    eye = np.eye(n)
    for k, w in enumerate(grid):
        try:
            g = c @ np.linalg.solve(1j * w * eye - a, b)
        except np.linalg.LinAlgError:
            smax[k] = smin[k] = s2[k] = np.nan
            continue
        sv = np.linalg.svd(g, compute_uv=False)
        smax[k] = sv[0] if sv.size else 0.0
        smin[k] = sv[-1] if sv.size else 0.0
        s2[k] = np.sqrt(np.sum(sv ** 2))
    return FrequencyResponse(grid=grid, sigma_max=smax, sigma_min=smin,
                             schatten2=s2)


def sample_deltas(rho: float, rows: int, cols: int, count: int, seed=0):
    """Admissible uncertainty samples; the first half sit on the boundary."""
    rng = np.random.default_rng(seed)
    r = min(rows, cols)
    out = []
    for idx in range(count):
        u, _ = np.linalg.qr(rng.normal(size=(rows, r)))
        vt, _ = np.linalg.qr(rng.normal(size=(cols, r)))
        s = np.ones(r) if idx < count // 2 else rng.uniform(0.0, 1.0, size=r)
        out.append(rho * (u * s) @ vt.T)
    return out


def sample_uncertainty(sys: UncertainLti, k, count: int = 200, seed: int = 0,
                       k_hat=None) -> dict:
    """Monte-Carlo robustness report for the loop u = K y.

    Draws admissible Delta samples (half forced to the boundary of the
    norm bound), closes the loop at each, and reports the worst spectral
    abscissa plus, when a reference gain is given, the worst sampled
    H2/Hinf deviation of the stacked system.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    k = np.atleast_2d(np.asarray(k, dtype=float))
    deltas = sample_deltas(sys.rho, sys.unc_in, sys.unc_out, count, seed)
    aug = None
    if k_hat is not None:
        aug = augment(sys, k_hat, k)
    worst_abscissa = -np.inf
    worst_h2 = 0.0
    worst_hinf = 0.0
    unstable = 0
    for delta in deltas:
        a_cl = sys.closed_a(k, delta)
        alpha = spectral_abscissa(a_cl)
        worst_abscissa = max(worst_abscissa, alpha)
        if alpha >= 0.0:
            unstable += 1
            continue
        if aug is not None:
            a_bar = aug.a_with(delta)
            if spectral_abscissa(a_bar) < 0.0:
                worst_h2 = max(worst_h2, h2_norm(a_bar, aug.b, aug.c))
                worst_hinf = max(worst_hinf, hinf_norm(a_bar, aug.b, aug.c))
    return {
        "count": count,
        "seed": seed,
        "rho": sys.rho,
        "worst_abscissa": float(worst_abscissa),
        "unstable_samples": unstable,
        "worst_h2": float(worst_h2),
        "worst_hinf": float(worst_hinf),
    }


@dataclass
class DeviationMetrics:
    r2: float
    r_inf: float
    cardinality_ratio: float


def deviation_metrics(sys: UncertainLti, k_hat, k) -> DeviationMetrics:
    """Relative H2/Hinf deviation of the K loop from the K_hat loop, and the
    nonzero-count ratio of the gains, all at Delta = 0."""
    k_hat = np.atleast_2d(np.asarray(k_hat, dtype=float))
    k = np.atleast_2d(np.asarray(k, dtype=float))
    a_ref = sys.closed_a(k_hat)
    ok, alpha = is_hurwitz(a_ref)
    if not ok:
        raise ValueError(f"reference loop unstable (abscissa {alpha:.3e})")
    aug = augment(sys, k_hat, k)
    ok, alpha = aug.is_stable()
    if not ok:
        raise ValueError(f"candidate loop unstable (abscissa {alpha:.3e})")
    ref_h2 = h2_norm(a_ref, sys.b2, sys.c)
    ref_hinf = hinf_norm(a_ref, sys.b2, sys.c)
    dev_h2 = h2_norm(aug.a, aug.b, aug.c)
    dev_hinf = hinf_norm(aug.a, aug.b, aug.c)
    nnz_ref = int(np.count_nonzero(k_hat))
    return DeviationMetrics(
        r2=dev_h2 / ref_h2,
        r_inf=dev_hinf / ref_hinf,
        cardinality_ratio=np.count_nonzero(k) / max(nnz_ref, 1),
    )


def link_density(x) -> np.ndarray:
    """Pairwise connection counts: entry (i, j), i != j, adds the nonzero
    flags of x_ii, x_ij, x_ji and x_jj; the diagonal is zero."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("link_density needs a square matrix")
    nz = (x != 0.0).astype(int)
    diag = np.diag(nz)
    out = diag[:, None] + diag[None, :] + nz + nz.T
    np.fill_diagonal(out, 0)
    return out
