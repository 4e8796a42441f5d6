"""Tiny affine-expression layer used to assemble conic programs.

A :class:`Lin` is a sparse linear form ``sum coeff_i * x_i + const`` over the
flat variable vector of a program.  Matrices of expressions are plain numpy
object arrays, with the usual congruence/addition helpers below.  This layer
only exists at build time; the solver sees flat triplet data.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Lin",
    "add",
    "block",
    "const_mat",
    "lin_mat",
    "lmul",
    "rmul",
    "scale",
    "transpose",
    "zeros",
]


class Lin:
    """Sparse affine scalar expression: ``terms`` maps column -> coefficient."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    def copy(self) -> "Lin":
        return Lin(self.terms, self.const)

    def __add__(self, other):
        if isinstance(other, Lin):
            out = Lin(self.terms, self.const + other.const)
            for col, coeff in other.terms.items():
                out.terms[col] = out.terms.get(col, 0.0) + coeff
            return out
        return Lin(self.terms, self.const + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (other * -1.0 if isinstance(other, Lin) else -float(other))

    def __rsub__(self, other):
        return (self * -1.0) + other

    def __mul__(self, scalar):
        s = float(scalar)
        return Lin({c: v * s for c, v in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"Lin({self.terms}, {self.const})"


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    flat = out.reshape(-1)
    for k in range(flat.size):
        flat[k] = Lin()
    return out


def const_mat(mat) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    out = np.empty(arr.shape, dtype=object)
    flat_in = arr.reshape(-1)
    flat = out.reshape(-1)
    for k in range(flat.size):
        flat[k] = Lin(const=flat_in[k])
    return out


def lin_mat(columns, shape) -> np.ndarray:
    """Expression matrix whose (i, j) entry is the variable at columns[i, j]."""
    cols = np.asarray(columns, dtype=int).reshape(shape)
    out = np.empty(shape, dtype=object)
    for i in range(shape[0]):
        for j in range(shape[1]):
            out[i, j] = Lin({int(cols[i, j]): 1.0})
    return out


def add(a, b) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    out = np.empty(a.shape, dtype=object)
    fa, fb, fo = a.reshape(-1), b.reshape(-1), out.reshape(-1)
    for k in range(fo.size):
        fo[k] = fa[k] + fb[k]
    return out


def scale(a, s: float) -> np.ndarray:
    out = np.empty(a.shape, dtype=object)
    fa, fo = a.reshape(-1), out.reshape(-1)
    for k in range(fo.size):
        fo[k] = fa[k] * s
    return out


def transpose(a) -> np.ndarray:
    return a.T.copy()


def lmul(mat, linmat) -> np.ndarray:
    """Constant matrix times expression matrix."""
    mat = np.asarray(mat, dtype=float)
    r, inner = mat.shape
    inner2, c = linmat.shape
    if inner != inner2:
        raise ValueError("inner dimension mismatch")
    out = np.empty((r, c), dtype=object)
    for i in range(r):
        row = mat[i]
        nz = np.flatnonzero(row)
        for j in range(c):
            acc = Lin()
            for k in nz:
                acc = acc + linmat[k, j] * row[k]
            out[i, j] = acc
    return out


def rmul(linmat, mat) -> np.ndarray:
    """Expression matrix times constant matrix."""
    mat = np.asarray(mat, dtype=float)
    r, inner = linmat.shape
    inner2, c = mat.shape
    if inner != inner2:
        raise ValueError("inner dimension mismatch")
    out = np.empty((r, c), dtype=object)
    for j in range(c):
        col = mat[:, j]
        nz = np.flatnonzero(col)
        for i in range(r):
            acc = Lin()
            for k in nz:
                acc = acc + linmat[i, k] * col[k]
            out[i, j] = acc
    return out


def block(rows) -> np.ndarray:
    """Assemble a block matrix from a nested list of expression matrices."""
    row_mats = [np.hstack([np.atleast_2d(b) for b in row]) for row in rows]
    return np.vstack(row_mats)
