"""Dense symmetric linear-algebra kernels shared by the whole toolkit.

Everything here is a pure function of its arguments, deterministic, and
restricted to desk scale (orders up to a few hundred): sorted/sign-fixed
eigendecomposition, Lyapunov and continuous Riccati solvers, and projection
onto the positive-semidefinite cone.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "EigPair",
    "eig_sym",
    "is_hurwitz",
    "psd_project",
    "solve_care",
    "solve_lyapunov",
    "spectral_abscissa",
    "symmetrize",
]

# Largest order for which the Lyapunov equation is solved by the Kronecker
# direct linear solve; above it scipy's Bartels-Stewart takes over.
_KRON_MAX_ORDER = 64


class EigPair(NamedTuple):
    """Eigendecomposition of a symmetric matrix, values sorted descending."""

    values: np.ndarray
    vectors: np.ndarray


class CareError(RuntimeError):
    """Riccati solve failed (not stabilizable or iteration stalled)."""


def _as_square(mat, name: str) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def symmetrize(mat) -> np.ndarray:
    """Return the symmetric part 0.5*(S + S^T)."""
    arr = _as_square(mat, "matrix")
    return 0.5 * (arr + arr.T)


def _check_symmetric(mat, name: str, rtol: float = 1e-8) -> np.ndarray:
    arr = _as_square(mat, name)
    scale = max(1.0, np.abs(arr).max())
    if np.abs(arr - arr.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


def eig_sym(mat) -> EigPair:
    """Eigendecomposition of a symmetric matrix with a canonical ordering.

    Values are sorted descending.  Ties keep the ascending-output order of
    the underlying LAPACK call and are then arranged by each vector's first
    significant component index, and every vector's first significant
    component is made positive, so the output is deterministic.
    """
    sym = _check_symmetric(mat, "matrix")
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]

    n = vals.size
    lead = np.empty(n, dtype=int)
    for k in range(n):
        col = vecs[:, k]
        sig = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        j = sig[0] if sig.size else 0
        lead[k] = j
        if col[j] < 0.0:
            vecs[:, k] = -col
    # reorder inside groups of exactly equal eigenvalues
    start = 0
    for k in range(1, n + 1):
        if k == n or vals[k] != vals[start]:
            if k - start > 1:
                sub = np.argsort(lead[start:k], kind="stable")
                vecs[:, start:k] = vecs[:, start + sub]
            start = k
    return EigPair(vals, vecs)


def spectral_abscissa(mat) -> float:
    """Largest real part of the eigenvalues of a (general) square matrix."""
    arr = _as_square(mat, "matrix")
    return float(np.max(np.linalg.eigvals(arr).real))


def is_hurwitz(mat) -> tuple[bool, float]:
    """Whether all eigenvalues lie in the open left half-plane.

    Returns (flag, spectral abscissa).
    """
    alpha = spectral_abscissa(mat)
    return alpha < 0.0, alpha


def psd_project(mat) -> np.ndarray:
    """Nearest (Frobenius) positive-semidefinite matrix: clip negative modes."""
    sym = _check_symmetric(mat, "matrix")
    vals, vecs = np.linalg.eigh(sym)
    if vals[0] >= 0.0:
        return sym
    clipped = np.clip(vals, 0.0, None)
    out = (vecs * clipped) @ vecs.T
    return 0.5 * (out + out.T)


def solve_lyapunov(a, q) -> np.ndarray:
    """Solve A X + X A^T + Q = 0 for symmetric X, with A Hurwitz.

    Uses the Kronecker-product direct linear solve up to order
    ``_KRON_MAX_ORDER`` (exact at desk scale) and Bartels-Stewart above it.
    """
    a = _as_square(a, "A")
    q = _check_symmetric(q, "Q")
    if a.shape != q.shape:
        raise ValueError(f"A and Q orders differ: {a.shape[0]} vs {q.shape[0]}")
    ok, alpha = is_hurwitz(a)
    if not ok:
        bad = _worst_eigenvalue(a)
        raise ValueError(f"A is not Hurwitz: eigenvalue {bad} has Re >= 0")
    n = a.shape[0]
    if n <= _KRON_MAX_ORDER:
        eye = np.eye(n)
        lhs = np.kron(eye, a) + np.kron(a, eye)
        x = np.linalg.solve(lhs, -q.reshape(-1)).reshape(n, n)
    else:
        from scipy.linalg import solve_continuous_lyapunov

        x = solve_continuous_lyapunov(a, -q)
    return 0.5 * (x + x.T)


def _worst_eigenvalue(a: np.ndarray) -> complex:
    lam = np.linalg.eigvals(a)
    return complex(lam[np.argmax(lam.real)])


def _bass_rounds(a, b, margin, beta_mult, rounds=40):
    """Iterated shifted-Lyapunov stabilization with an abscissa line search.

    One exact Bass step already stabilizes ((A - B K0) Z + Z (.)^T =
    -2 beta Z < 0), but the shifted Gramian Z can be numerically singular
    (Gramian decay); repeating damped steps recovers those cases.
    """
    n = a.shape[0]
    k_total = np.zeros((b.shape[1], n))
    a_cur = a
    for _ in range(rounds):
        alpha = spectral_abscissa(a_cur)
        if alpha < -margin:
            return k_total
        beta = (float(np.linalg.norm(a_cur, 2)) + 1.0) * beta_mult
        # the shift must clear the leftmost eigenvalue for -(A + beta I)
        # to be Hurwitz
        min_re = float(np.min(np.linalg.eigvals(a_cur).real))
        beta = max(beta, -min_re + 1.0)
        shifted = -(a_cur + beta * np.eye(n))
        z = solve_lyapunov(shifted, 2.0 * (b @ b.T))
        # z is singular on the uncontrollable subspace; the ridge keeps the
        # solve defined for merely stabilizable pairs
        ridge = 1e-14 * max(1e-300, float(np.linalg.eigvalsh(z)[-1]))
        k_step = np.linalg.solve(z + ridge * np.eye(n), b).T
        for scale in (1.0, 0.5, 0.25, 0.1, 0.03):
            cand = a_cur - scale * (b @ k_step)
            cand_alpha = spectral_abscissa(cand)
            if cand_alpha < alpha - 1e-12 or cand_alpha < -margin:
                a_cur = cand
                k_total = k_total + scale * k_step
                break
        else:
            return None
    if spectral_abscissa(a - b @ k_total) < -margin:
        return k_total
    return None


def _stabilizing_gain(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Initial stabilizing gain K0 (A - B K0 Hurwitz) via shifted Lyapunov
    solves; several shift magnitudes are tried in a fixed order."""
    n = a.shape[0]
    scale = max(1.0, float(np.linalg.norm(a, 2)))
    if spectral_abscissa(a) < -1e-8 * scale:
        return np.zeros((b.shape[1], n))
    # ask for a solidly stable start: a shallow closed loop makes the first
    # Newton step blow up
    for margin in (1e-3 * scale, 1e-8 * scale):
        for beta_mult in (1.0, 0.5, 2.0, 0.25, 4.0):
            k0 = _bass_rounds(a, b, margin, beta_mult)
            if k0 is not None:
                return k0
    raise CareError("failed to find a stabilizing initial gain; "
                    "is (A, B) stabilizable?")


def _care_step_length(res, v_mat) -> float:
    """Exact line search for the Newton step: the residual along the step is
    (1-t) R - t^2 V, so ||.||_F^2 is a quartic in t minimized on [0, 2]."""
    alpha = float(np.sum(res * res))
    beta = float(np.sum(res * v_mat))
    gamma = float(np.sum(v_mat * v_mat))
    # f(t) = (1-t)^2 a - 2 (1-t) t^2 b + t^4 c; f'(t)/2 as cubic coeffs
    coeffs = [2.0 * gamma, 3.0 * beta, alpha - 2.0 * beta, -alpha]
    candidates = [1.0, 2.0]
    for root in np.roots(coeffs):
        if abs(root.imag) < 1e-10 and 1e-8 < root.real <= 2.0:
            candidates.append(float(root.real))

    def f(t):
        return ((1 - t) ** 2 * alpha - 2.0 * (1 - t) * t * t * beta
                + t ** 4 * gamma)

    return min(candidates, key=f)


def solve_care(a, b, q, r, tol: float = 1e-12, max_iters: int = 100) -> np.ndarray:
    """Solve A^T P + P A - P B R^{-1} B^T P + Q = 0 by Newton-Kleinman.

    Each Newton step is one Lyapunov solve for the correction direction; an
    exact line search on the Riccati residual keeps the iteration stable
    even when the initial stabilizing gain is poor.  Returns the
    stabilizing P >= 0.
    """
    a = _as_square(a, "A")
    b = np.asarray(b, dtype=float)
    if b.ndim < 2:
        b = b.reshape(-1, 1)
    q = _check_symmetric(q, "Q")
    r = _check_symmetric(r, "R")
    n, m = b.shape
    if a.shape[0] != n or q.shape[0] != n or r.shape[0] != m:
        raise ValueError("inconsistent CARE dimensions")
    if np.linalg.eigvalsh(r)[0] <= 0.0:
        raise ValueError("R must be positive definite")

    r_fact = np.linalg.cholesky(r)

    def gain(p):
        # R^{-1} B^T P via the Cholesky factor
        return np.linalg.solve(r_fact.T, np.linalg.solve(r_fact, b.T @ p))

    def residual(p, k):
        return a.T @ p + p @ a - k.T @ r @ k + q

    k0 = _stabilizing_gain(a, b)
    p = solve_lyapunov((a - b @ k0).T, q + k0.T @ r @ k0)
    p = 0.5 * (p + p.T)
    q_scale = max(1.0, float(np.linalg.norm(q, "fro")))
    for _ in range(max_iters):
        k = gain(p)
        a_cl = a - b @ k
        if spectral_abscissa(a_cl) >= 0.0:
            raise CareError("Newton iteration lost stability")
        res = residual(p, k)
        if np.linalg.norm(res, "fro") <= 0.1 * tol * q_scale:
            break
        step = solve_lyapunov(a_cl.T, res)
        step = 0.5 * (step + step.T)
        bstep = gain(step)
        v_mat = step @ b @ bstep
        t = _care_step_length(res, 0.5 * (v_mat + v_mat.T))
        p_next = 0.5 * ((p + t * step) + (p + t * step).T)
        if np.linalg.norm(p_next - p, "fro") <= tol * max(1.0, np.linalg.norm(p, "fro")):
            p = p_next
            break
        p = p_next
    k = gain(p)
    res = residual(p, k)
    if np.linalg.norm(res, "fro") > 1e-8 * q_scale:
        raise CareError(
            "Newton-Kleinman did not converge: residual "
            f"{np.linalg.norm(res, 'fro'):.3e}"
        )
    if spectral_abscissa(a - b @ k) >= 0.0:
        raise CareError("CARE solution is not stabilizing")
    return 0.5 * (p + p.T)
