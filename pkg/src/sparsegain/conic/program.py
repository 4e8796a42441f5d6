"""Canonical conic program container and its builder.

The canonical form is

    minimize    c @ x
    subject to  A @ x == b,   x in K

where K is a product of free, nonnegative and PSD blocks laid out in
registration order.  PSD blocks are stored in scaled-lower-triangle (svec)
coordinates so the cone is self-dual and inner products match traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .expr import Lin, lin_mat

__all__ = [
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "svec_index",
    "svec_len",
    "svec_pack",
    "svec_unpack",
]

SQRT2 = math.sqrt(2.0)

FREE, NONNEG, PSD = 0, 1, 2
_KIND_NAMES = {FREE: "free", NONNEG: "nonneg", PSD: "psd"}


def svec_len(order: int) -> int:
    return order * (order + 1) // 2


def svec_index(order: int, i: int, j: int) -> int:
    """Flat index of entry (i, j), i >= j, in column-major lower-triangle order."""
    if i < j:
        i, j = j, i
    return j * order - j * (j - 1) // 2 + (i - j)


def svec_pack(mat: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix; off-diagonals scaled by sqrt(2)."""
    d = mat.shape[0]
    out = np.empty(svec_len(d))
    k = 0
    for j in range(d):
        out[k] = mat[j, j]
        k += 1
        for i in range(j + 1, d):
            out[k] = SQRT2 * 0.5 * (mat[i, j] + mat[j, i])
            k += 1
    return out


def svec_unpack(vec: np.ndarray, order: int) -> np.ndarray:
    out = np.empty((order, order))
    k = 0
    inv = 1.0 / SQRT2
    for j in range(order):
        out[j, j] = vec[k]
        k += 1
        for i in range(j + 1, order):
            out[i, j] = out[j, i] = vec[k] * inv
            k += 1
    return out


@dataclass
class VarBlock:
    name: str
    kind: int
    size: int          # length in the flat vector
    order: int         # PSD order (0 otherwise)
    offset: int


@dataclass
class ConicProgram:
    """Immutable canonical program plus name -> slice metadata."""

    blocks: list
    c: np.ndarray
    a_mat: sp.csc_matrix
    b: np.ndarray
    obj_offset: float
    row_families: list
    extractors: dict
    block_by_name: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.block_by_name:
            self.block_by_name = {blk.name: blk for blk in self.blocks}

    @property
    def num_vars(self) -> int:
        return int(self.c.size)

    @property
    def num_rows(self) -> int:
        return int(self.b.size)

    def cone_layout(self):
        """(kinds, params) int arrays describing the variable cone, in order."""
        kinds = np.array([blk.kind for blk in self.blocks], dtype=np.int32)
        params = np.array(
            [blk.order if blk.kind == PSD else blk.size for blk in self.blocks],
            dtype=np.int32,
        )
        return kinds, params

    def value(self, name: str, x: np.ndarray):
        """Reconstruct the named model variable from a flat solution vector."""
        spec = self.extractors[name]
        blk = self.block_by_name[spec["block"]]
        seg = x[blk.offset : blk.offset + blk.size]
        kind = spec["kind"]
        if kind == "psd":
            mat = svec_unpack(seg, blk.order)
            shift = spec.get("shift", 0.0)
            if shift:
                mat = mat + shift * np.eye(blk.order)
            return mat
        if kind == "mat":
            return seg.reshape(spec["shape"]).copy()
        if kind == "masked":
            out = np.zeros(spec["shape"])
            for k, (i, j) in enumerate(spec["indices"]):
                out[i, j] = seg[k]
            return out
        if kind == "scalar":
            return float(seg[spec.get("index", 0)] + spec.get("offset", 0.0))
        raise KeyError(f"unknown extractor kind {kind!r}")

    def family_rows(self, family: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.row_families) == family)

    def dump_json(self, path) -> None:
        """Self-describing dump (block sizes + triplet data) for cross-checks."""
        coo = self.a_mat.tocoo()
        doc = {
            "format": "sparsegain-conic-v1",
            "blocks": [
                {
                    "name": blk.name,
                    "kind": _KIND_NAMES[blk.kind],
                    "size": blk.size,
                    "order": blk.order,
                    "offset": blk.offset,
                }
                for blk in self.blocks
            ],
            "objective": {
                "coeffs": self.c.tolist(),
                "offset": self.obj_offset,
            },
            "constraints": {
                "rows": self.num_rows,
                "cols": self.num_vars,
                "row": coo.row.tolist(),
                "col": coo.col.tolist(),
                "val": coo.data.tolist(),
                "rhs": self.b.tolist(),
                "families": list(self.row_families),
            },
            "extractors": self.extractors,
            "svec": "column-major lower triangle, off-diagonal * sqrt(2)",
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @staticmethod
    def load_json(path) -> "ConicProgram":
        with open(path) as fh:
            doc = json.load(fh)
        blocks = [
            VarBlock(b["name"], {"free": FREE, "nonneg": NONNEG, "psd": PSD}[b["kind"]],
                     b["size"], b["order"], b["offset"])
            for b in doc["blocks"]
        ]
        cons = doc["constraints"]
        a_mat = sp.coo_matrix(
            (cons["val"], (cons["row"], cons["col"])),
            shape=(cons["rows"], cons["cols"]),
        ).tocsc()
        return ConicProgram(
            blocks=blocks,
            c=np.asarray(doc["objective"]["coeffs"], dtype=float),
            a_mat=a_mat,
            b=np.asarray(cons["rhs"], dtype=float),
            obj_offset=float(doc["objective"]["offset"]),
            row_families=list(cons["families"]),
            extractors=doc["extractors"],
        )


@dataclass
class ConicSolution:
    """Solver output; primal values are cone-feasible by construction."""

    status: str               # optimal | infeasible | unbounded | max-iters
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    program: ConicProgram
    certificate: dict | None = None

    def value(self, name: str):
        return self.program.value(name, self.x)


class ProgramBuilder:
    """Incremental builder: declare blocks, emit equality rows, set costs."""

    def __init__(self):
        self._blocks = []
        self._n = 0
        self._rows_i = []
        self._rows_j = []
        self._rows_v = []
        self._b = []
        self._families = []
        self._obj = {}
        self._obj_offset = 0.0
        self._extractors = {}
        self._names = set()

    # -- block declaration -------------------------------------------------

    def _add_block(self, name, kind, size, order=0) -> VarBlock:
        if name in self._names:
            raise ValueError(f"duplicate block name {name!r}")
        self._names.add(name)
        blk = VarBlock(name, kind, size, order, self._n)
        self._blocks.append(blk)
        self._n += size
        return blk

    def free_mat(self, name: str, shape) -> np.ndarray:
        """Free matrix variable; returns its expression matrix (row-major)."""
        rows, cols = shape
        blk = self._add_block(name, FREE, rows * cols)
        self._extractors[name] = {"kind": "mat", "block": name, "shape": [rows, cols]}
        idx = np.arange(blk.offset, blk.offset + blk.size)
        return lin_mat(idx, (rows, cols))

    def free_entries(self, name: str, shape, indices) -> np.ndarray:
        """Matrix with variables only at ``indices``; other entries fixed to 0."""
        indices = [(int(i), int(j)) for i, j in indices]
        blk = self._add_block(name, FREE, len(indices))
        self._extractors[name] = {
            "kind": "masked",
            "block": name,
            "shape": [int(shape[0]), int(shape[1])],
            "indices": [list(ij) for ij in indices],
        }
        out = np.empty(shape, dtype=object)
        for i in range(shape[0]):
            for j in range(shape[1]):
                out[i, j] = Lin()
        for k, (i, j) in enumerate(indices):
            out[i, j] = Lin({blk.offset + k: 1.0})
        return out

    def nonneg_vec(self, name: str, size: int) -> list:
        blk = self._add_block(name, NONNEG, size)
        return [Lin({blk.offset + k: 1.0}) for k in range(size)]

    def nonneg_scalar(self, name: str, floor: float = 0.0) -> Lin:
        """Scalar >= floor, realized as floor + nonnegative variable."""
        blk = self._add_block(name, NONNEG, 1)
        self._extractors[name] = {
            "kind": "scalar", "block": name, "index": 0, "offset": floor,
        }
        return Lin({blk.offset: 1.0}, floor)

    def psd_mat(self, name: str, order: int, shift: float = 0.0) -> np.ndarray:
        """PSD matrix variable (plus optional shift*I); returns expressions."""
        blk = self._add_block(name, PSD, svec_len(order), order)
        self._extractors[name] = {
            "kind": "psd", "block": name, "shift": shift,
        }
        out = np.empty((order, order), dtype=object)
        inv = 1.0 / SQRT2
        for j in range(order):
            for i in range(j, order):
                col = blk.offset + svec_index(order, i, j)
                coeff = 1.0 if i == j else inv
                const = shift if i == j else 0.0
                e = Lin({col: coeff}, const)
                out[i, j] = e
                out[j, i] = e
        return out

    # -- constraints and objective ------------------------------------------

    def add_eq(self, lin: Lin, family: str) -> None:
        """Append the row ``lin == 0``."""
        row = len(self._b)
        for col, coeff in lin.terms.items():
            if coeff != 0.0:
                self._rows_i.append(row)
                self._rows_j.append(col)
                self._rows_v.append(float(coeff))
        self._b.append(-lin.const)
        self._families.append(family)

    def add_eq_mat(self, linmat: np.ndarray, family: str, lower_only: bool = False) -> None:
        rows, cols = linmat.shape
        for j in range(cols):
            start = j if lower_only else 0
            for i in range(start, rows):
                self.add_eq(linmat[i, j], family)

    def add_neg_def(self, linmat: np.ndarray, margin: float, slack_name: str,
                    family: str) -> None:
        """Constrain the symmetric expression matrix to be <= -margin * I.

        Adds a PSD slack S and the rows linmat + margin*I + S == 0.
        """
        order = linmat.shape[0]
        if linmat.shape[1] != order:
            raise ValueError("negative-definite block must be square")
        slack = self.psd_mat(slack_name, order)
        for j in range(order):
            for i in range(j, order):
                expr = linmat[i, j] + slack[i, j]
                if i == j:
                    expr = expr + margin
                self.add_eq(expr, family)

    def add_obj(self, lin: Lin, weight: float = 1.0) -> None:
        for col, coeff in lin.terms.items():
            self._obj[col] = self._obj.get(col, 0.0) + weight * coeff
        self._obj_offset += weight * lin.const

    def build(self) -> ConicProgram:
        n = self._n
        m = len(self._b)
        a_mat = sp.coo_matrix(
            (self._rows_v, (self._rows_i, self._rows_j)), shape=(m, n)
        ).tocsc()
        c = np.zeros(n)
        for col, coeff in self._obj.items():
            c[col] = coeff
        return ConicProgram(
            blocks=list(self._blocks),
            c=c,
            a_mat=a_mat,
            b=np.asarray(self._b, dtype=float),
            obj_offset=self._obj_offset,
            row_families=list(self._families),
            extractors=dict(self._extractors),
        )
