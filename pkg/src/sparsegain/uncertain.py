"""Uncertain LTI plant model, admissible-gain structure sets, and the stacked
matrices used by the deviation LMIs.

The plant is

    dx = (A + D*Delta*E_A) x + (B1 + D*Delta*E_B1) u + B2 d,   y = C x

with Delta an unknown i-by-j matrix bounded by Delta^T Delta <= rho^2 I.
Delta is treated as a constant matrix per analysis sample.  The "augmented"
system stacks a candidate closed loop against the reference closed loop so
that its transfer matrix is exactly the deviation between the two.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .matops import spectral_abscissa

__all__ = [
    "AugmentedSystem",
    "ClosedLoopData",
    "StructureSet",
    "UncertainLti",
    "augment",
    "closed_loop_data",
    "project_structure",
]


def _mat(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _controllable(a: np.ndarray, b: np.ndarray) -> bool:
    n = a.shape[0]
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    ctrb = np.hstack(blocks)
    tol = max(a.shape[0], ctrb.shape[1]) * np.linalg.norm(ctrb, 2) * np.finfo(float).eps
    return np.linalg.matrix_rank(ctrb, tol=max(tol, 1e-12)) == n


def _detectable(a: np.ndarray, c: np.ndarray) -> bool:
    # PBH: every eigenvalue in the closed right half-plane must be observable
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real < -1e-9:
            continue
        stack = np.vstack([a - lam * np.eye(n), c.astype(complex)])
        if np.linalg.matrix_rank(stack, tol=1e-9 * max(1.0, abs(lam))) < n:
            return False
    return True


@dataclass
class UncertainLti:
    """Nominal matrices plus the norm-bounded structured uncertainty."""

    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e_a: np.ndarray
    e_b1: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        self.a = _mat(self.a, "A")
        self.b1 = _mat(self.b1, "B1")
        self.b2 = _mat(self.b2, "B2")
        self.c = _mat(self.c, "C")
        self.d = _mat(self.d, "D")
        self.e_a = _mat(self.e_a, "E_A")
        self.e_b1 = _mat(self.e_b1, "E_B1")
        self.rho = float(self.rho)
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError("A must be square")
        checks = [
            (self.b1.shape[0] == n, "B1 rows"),
            (self.b2.shape[0] == n, "B2 rows"),
            (self.c.shape[1] == n, "C cols"),
            (self.d.shape[0] == n, "D rows"),
            (self.e_a.shape[1] == n, "E_A cols"),
            (self.e_a.shape[0] == self.e_b1.shape[0], "E_A/E_B1 rows"),
            (self.e_b1.shape[1] == self.b1.shape[1], "E_B1 cols"),
        ]
        for ok, what in checks:
            if not ok:
                raise ValueError(f"dimension mismatch at {what}")
        if self.rho < 0.0:
            raise ValueError("rho must be nonnegative")
        if not _controllable(self.a, self.b1):
            raise ValueError("(A, B1) is not controllable")
        if not _detectable(self.a, self.c):
            raise ValueError("(A, C) is not detectable")

    # dimensions ------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b1.shape[1]

    @property
    def p(self) -> int:
        return self.b2.shape[1]

    @property
    def q(self) -> int:
        return self.c.shape[0]

    @property
    def unc_in(self) -> int:
        """Column count of D (the 'i' of the i-by-j uncertainty block)."""
        return self.d.shape[1]

    @property
    def unc_out(self) -> int:
        """Row count of E_A (the 'j' of the i-by-j uncertainty block)."""
        return self.e_a.shape[0]

    # behavior ----------------------------------------------------------------

    def delta_a(self, delta) -> np.ndarray:
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        return self.d @ delta @ self.e_a

    def delta_b1(self, delta) -> np.ndarray:
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        return self.d @ delta @ self.e_b1

    def closed_a(self, k, delta=None) -> np.ndarray:
        """A-matrix of the loop u = K y, optionally at a given Delta."""
        k = _mat(k, "K")
        if delta is None:
            return self.a + self.b1 @ k @ self.c
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        return (self.a + self.d @ delta @ self.e_a
                + (self.b1 + self.d @ delta @ self.e_b1) @ k @ self.c)

    # serialization -----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format": "sparsegain-system-v1",
            "A": self.a.tolist(),
            "B1": self.b1.tolist(),
            "B2": self.b2.tolist(),
            "C": self.c.tolist(),
            "D": self.d.tolist(),
            "E_A": self.e_a.tolist(),
            "E_B1": self.e_b1.tolist(),
            "rho": self.rho,
        }

    @staticmethod
    def from_json(doc: dict) -> "UncertainLti":
        return UncertainLti(
            a=doc["A"], b1=doc["B1"], b2=doc["B2"], c=doc["C"],
            d=doc["D"], e_a=doc["E_A"], e_b1=doc["E_B1"],
            rho=doc.get("rho", 0.0),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @staticmethod
    def load(path) -> "UncertainLti":
        with open(path) as fh:
            return UncertainLti.from_json(json.load(fh))


@dataclass
class StructureSet:
    """Admissible-gain set: boolean sparsity pattern plus entrywise box."""

    pattern: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.pattern = np.asarray(self.pattern, dtype=bool)
        shape = self.pattern.shape
        if self.lower is None:
            self.lower = np.full(shape, -np.inf)
        if self.upper is None:
            self.upper = np.full(shape, np.inf)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != shape or self.upper.shape != shape:
            raise ValueError("bounds must match the pattern shape")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @staticmethod
    def full(m: int, q: int) -> "StructureSet":
        """Unconstrained gains of the given shape."""
        return StructureSet(np.ones((m, q), dtype=bool))

    @property
    def shape(self):
        return self.pattern.shape

    def allowed_indices(self) -> list:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.pattern))]

    def contains(self, k, tol: float = 1e-9) -> bool:
        k = _mat(k, "K")
        if k.shape != self.pattern.shape:
            return False
        if np.any(np.abs(k[~self.pattern]) > tol):
            return False
        ok_lo = k >= self.lower - tol
        ok_hi = k <= self.upper + tol
        return bool(np.all(ok_lo[self.pattern]) and np.all(ok_hi[self.pattern]))

    def zero_allowed(self) -> np.ndarray:
        """Entries where truncation to exact zero stays admissible."""
        return self.pattern & (self.lower <= 0.0) & (self.upper >= 0.0)

    def to_json(self) -> dict:
        def enc(mat):
            return [[None if not np.isfinite(v) else float(v) for v in row]
                    for row in mat]
        return {
            "format": "sparsegain-structure-v1",
            "pattern": self.pattern.astype(int).tolist(),
            "lower": enc(self.lower),
            "upper": enc(self.upper),
        }

    @staticmethod
    def from_json(doc: dict) -> "StructureSet":
        pattern = np.asarray(doc["pattern"], dtype=bool)

        def dec(rows, fill):
            return np.array([[fill if v is None else float(v) for v in row]
                             for row in rows])

        lower = dec(doc["lower"], -np.inf) if "lower" in doc else None
        upper = dec(doc["upper"], np.inf) if "upper" in doc else None
        return StructureSet(pattern, lower, upper)


def project_structure(k, struct: StructureSet) -> np.ndarray:
    """Force disallowed entries to zero and clamp the rest into the box."""
    k = _mat(k, "K").copy()
    k = np.clip(k, struct.lower, struct.upper)
    k[~struct.pattern] = 0.0
    return k


@dataclass
class AugmentedSystem:
    """Stacked (candidate loop, reference loop) realization of the deviation.

    The transfer from disturbance to ``c @ state`` equals S - S_hat; with
    rho = 0 and K equal to the reference gain it is identically zero.
    """

    a: np.ndarray          # nominal stacked A (Delta = 0)
    b: np.ndarray
    c: np.ndarray
    d_in: np.ndarray       # stacked uncertainty input map [D; 0]
    e_out: np.ndarray      # closed-loop uncertainty output map [E_A + E_B1 K C, 0]
    rho: float

    def a_with(self, delta) -> np.ndarray:
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        return self.a + self.d_in @ delta @ self.e_out

    def is_stable(self, delta=None) -> tuple[bool, float]:
        mat = self.a if delta is None else self.a_with(delta)
        alpha = spectral_abscissa(mat)
        return alpha < 0.0, alpha


def augment(sys: UncertainLti, k_hat, k) -> AugmentedSystem:
    """Stack the K-loop (uncertain) over the reference K_hat-loop (nominal)."""
    k_hat = _mat(k_hat, "K_hat")
    k = _mat(k, "K")
    n, q, m = sys.n, sys.q, sys.m
    if k.shape != (m, q) or k_hat.shape != (m, q):
        raise ValueError(f"gains must be {m}x{q}")
    zero = np.zeros((n, n))
    a_loop = sys.closed_a(k)
    a_ref = sys.closed_a(k_hat)
    a_bar = np.block([[a_loop, zero], [zero, a_ref]])
    b_bar = np.vstack([sys.b2, sys.b2])
    c_bar = np.hstack([sys.c, -sys.c])
    d_in = np.vstack([sys.d, np.zeros_like(sys.d)])
    e_out = np.hstack([sys.e_a + sys.e_b1 @ k @ sys.c,
                       np.zeros((sys.unc_out, n))])
    return AugmentedSystem(a=a_bar, b=b_bar, c=c_bar, d_in=d_in, e_out=e_out,
                           rho=sys.rho)


@dataclass
class ClosedLoopData:
    """Gain-independent pieces of the stacked closed loop.

    The stacked A splits as ``a_fixed + b_gain @ K @ c_gain`` and the
    uncertainty output map as ``e_fixed + e_gain @ K @ c_gain``; everything
    else is constant.
    """

    a_fixed: np.ndarray    # blockdiag(A, A + B1 K_hat C)
    b_gain: np.ndarray     # [B1; 0]
    c_gain: np.ndarray     # [C, 0]
    e_fixed: np.ndarray    # [E_A, 0]
    d_in: np.ndarray       # [D; 0]
    b_dist: np.ndarray     # [B2; B2]
    c_err: np.ndarray      # [C, -C]
    e_gain: np.ndarray     # E_B1
    gain_ref: np.ndarray   # K_hat
    rho: float
    dims: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dims["n"]

    @property
    def m(self) -> int:
        return self.dims["m"]

    def closed_a(self, k) -> np.ndarray:
        return self.a_fixed + self.b_gain @ np.atleast_2d(k) @ self.c_gain

    def closed_e(self, k) -> np.ndarray:
        return self.e_fixed + self.e_gain @ np.atleast_2d(k) @ self.c_gain


def closed_loop_data(sys: UncertainLti, k_hat) -> ClosedLoopData:
    """Assemble the stacked parameter matrices for a reference gain."""
    k_hat = _mat(k_hat, "K_hat")
    n, m, q = sys.n, sys.m, sys.q
    if k_hat.shape != (m, q):
        raise ValueError(f"K_hat must be {m}x{q}")
    zero = np.zeros((n, n))
    a_ref = sys.a + sys.b1 @ k_hat @ sys.c
    return ClosedLoopData(
        a_fixed=np.block([[sys.a, zero], [zero, a_ref]]),
        b_gain=np.vstack([sys.b1, np.zeros((n, m))]),
        c_gain=np.hstack([sys.c, np.zeros((q, n))]),
        e_fixed=np.hstack([sys.e_a, np.zeros((sys.unc_out, n))]),
        d_in=np.vstack([sys.d, np.zeros_like(sys.d)]),
        b_dist=np.vstack([sys.b2, sys.b2]),
        c_err=np.hstack([sys.c, -sys.c]),
        e_gain=sys.e_b1.copy(),
        gain_ref=k_hat,
        rho=sys.rho,
        dims={"n": n, "m": m, "p": sys.p, "q": q,
              "unc_in": sys.unc_in, "unc_out": sys.unc_out},
    )
