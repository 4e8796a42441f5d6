"""Deviation-bound LMI blocks, the gain-consistency completion matrix, and
assembly of the full gain-sparsification conic program.

Two ways in:

* ``assemble_z_program`` builds the convex half of the alternating scheme
  (gain and Lyapunov variables jointly, consistency enforced only through
  the penalized PSD completion block);
* ``robust_h2_program`` / ``robust_hinf_program`` / ``certify_gain`` bound
  the norms of a *fixed* loop, which is the rigorous certification path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import expr
from .conic.program import ConicProgram, ConicSolution, ProgramBuilder, svec_pack
from .conic.solver import SplittingSolver
from .uncertain import ClosedLoopData, StructureSet

__all__ = [
    "LmiInstance",
    "ZPoint",
    "ZProgram",
    "assemble_z_program",
    "bordered_completion",
    "build_consistency",
    "build_h2_block",
    "build_hinf_block",
    "certify_gain",
    "consistency_completion",
    "consistency_order",
    "robust_h2_program",
    "robust_hinf_program",
]

DEFAULT_DELTA_STRICT = 1e-7


def _sym_cross(x_lin, y_lin, a_fixed, b_gain):
    """X A^T + A X + Y B^T + B Y^T as an expression matrix."""
    xa = expr.rmul(x_lin, a_fixed.T)
    yb = expr.rmul(y_lin, b_gain.T)
    half = expr.add(xa, yb)
    return expr.add(half, half.T)


def _scalar_times(mat, lin):
    """Constant matrix scaled by a scalar expression."""
    mat = np.asarray(mat, dtype=float)
    out = np.empty(mat.shape, dtype=object)
    for i in range(mat.shape[0]):
        for j in range(mat.shape[1]):
            out[i, j] = lin * mat[i, j]
    return out


def _trace_congruence(c_mat, x_lin):
    """Tr(C X C^T) = <C^T C, X> as a scalar expression."""
    g = c_mat.T @ c_mat
    acc = expr.Lin()
    d = g.shape[0]
    for i in range(d):
        if g[i, i] != 0.0:
            acc = acc + x_lin[i, i] * g[i, i]
        for j in range(i):
            if g[i, j] != 0.0:
                acc = acc + x_lin[i, j] * (2.0 * g[i, j])
    return acc


def build_h2_block(b_dist, d_in, e_fixed, e_gain, rho, q_lin, x_lin, y_lin,
                   eps_lin):
    """Uncertain-Gramian block, order 2n + j, to be constrained negative.

    [[ Q + B B^T + eps*rho*D D^T ,  sqrt(rho) R^T ],
     [ sqrt(rho) R               , -eps I         ]]
    with Q the symmetrized Lyapunov cross term and R = E_fixed X + E_gain Y^T.
    """
    j = e_fixed.shape[0]
    sq = math.sqrt(rho)
    top = expr.add(q_lin, expr.const_mat(b_dist @ b_dist.T))
    if rho > 0.0:
        top = expr.add(top, _scalar_times(rho * (d_in @ d_in.T), eps_lin))
    r_lin = expr.add(expr.lmul(e_fixed, x_lin), expr.rmul(y_lin, e_gain.T).T)
    corner = _scalar_times(-np.eye(j), eps_lin)
    return expr.block([
        [top, expr.scale(r_lin.T, sq)],
        [expr.scale(r_lin, sq), corner],
    ])


def build_hinf_block(b_dist, c_err, d_in, e_fixed, e_gain, rho,
                     x_lin, q_lin, y_lin, eps_lin, gamma_lin):
    """Uncertain bounded-real block, order 2n + p + q + j, constrained negative.

    [[ Q + eps*rho*D D^T, B,          (C X)^T,    sqrt(rho) R^T ],
     [ B^T,              -gamma I_p,  0,          0             ],
     [ C X,               0,         -gamma I_q,  0             ],
     [ sqrt(rho) R,       0,          0,         -eps I_j       ]]
    """
    p = b_dist.shape[1]
    qdim = c_err.shape[0]
    j = e_fixed.shape[0]
    sq = math.sqrt(rho)
    top = q_lin
    if rho > 0.0:
        top = expr.add(top, _scalar_times(rho * (d_in @ d_in.T), eps_lin))
    cx = expr.lmul(c_err, x_lin)
    r_lin = expr.add(expr.lmul(e_fixed, x_lin), expr.rmul(y_lin, e_gain.T).T)
    b_const = expr.const_mat(b_dist)
    z_pq = expr.zeros((p, qdim))
    z_pj = expr.zeros((p, j))
    z_qj = expr.zeros((qdim, j))
    return expr.block([
        [top, b_const, cx.T, expr.scale(r_lin.T, sq)],
        [b_const.T, _scalar_times(-np.eye(p), gamma_lin), z_pq, z_pj],
        [cx, z_pq.T, _scalar_times(-np.eye(qdim), gamma_lin), z_qj],
        [expr.scale(r_lin, sq), z_pj.T, z_qj.T,
         _scalar_times(-np.eye(j), eps_lin)],
    ])


# -- consistency (rank) block ------------------------------------------------

def consistency_order(n: int, m: int) -> int:
    """Order of the PSD completion block tying the gain to the Lyapunov
    variables: three stacked state blocks plus one input block."""
    return 6 * n + m


def bordered_completion(base: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """Minimal-rank bordered matrix [[U, UY^T, I], [YU, YUY^T, Y],
    [I, Y^T, U^{-1}]] for U > 0; its rank equals the order of U."""
    base = np.asarray(base, dtype=float)
    factor = np.atleast_2d(np.asarray(factor, dtype=float))
    n = base.shape[0]
    inv = np.linalg.inv(base)
    stack = np.vstack([np.eye(n), factor, inv])
    return stack @ base @ stack.T


def consistency_completion(x1, x2, k, c_gain) -> np.ndarray:
    """Rank-2n completion of the consistency block at a consistent point
    (cross terms equal to X_r (K C_gain)^T, free blocks minimal)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    kc = np.atleast_2d(k) @ c_gain
    inv1 = np.linalg.inv(x1)
    stack = np.vstack([np.eye(x1.shape[0]), kc, x2 @ inv1, inv1])
    return stack @ x1 @ stack.T


def build_consistency(builder: ProgramBuilder, name: str, x1_lin, y1_lin,
                      x2_lin, y2_lin, k_lin, c_gain, family: str):
    """PSD completion variable with its defined blocks pinned.

    Layout (row blocks of heights 2n, m, 2n, 2n):
        [[X1,  .,   .,  .],
         [Y1', f,   .,  .],
         [X2,  Y2,  f,  .],
         [I,  (K Cg)', f, f]]
    where ``f`` marks free sub-blocks.  Returns the block's expressions.
    """
    two_n = x1_lin.shape[0]
    m = y1_lin.shape[1]
    order = 3 * two_n + m
    cmat = builder.psd_mat(name, order)
    o2 = two_n
    o3 = two_n + m
    o4 = 2 * two_n + m
    kck_t = expr.rmul(k_lin, c_gain).T  # (K C_gain)^T, 2n x m

    for j in range(two_n):
        for i in range(j, two_n):
            builder.add_eq(cmat[i, j] - x1_lin[i, j], family)
    for a in range(m):
        for b in range(two_n):
            builder.add_eq(cmat[o2 + a, b] - y1_lin[b, a], family)
    for a in range(two_n):
        for b in range(two_n):
            builder.add_eq(cmat[o3 + a, b] - x2_lin[a, b], family)
    for a in range(two_n):
        for b in range(m):
            builder.add_eq(cmat[o3 + a, o2 + b] - y2_lin[a, b], family)
    eye = np.eye(two_n)
    for a in range(two_n):
        for b in range(two_n):
            builder.add_eq(cmat[o4 + a, b] - eye[a, b], family)
    for a in range(two_n):
        for b in range(m):
            builder.add_eq(cmat[o4 + a, o2 + b] - kck_t[a, b], family)
    return cmat


# -- synthesis program ---------------------------------------------------------

@dataclass
class LmiInstance:
    """Everything the gain-sparsification conic program needs, with the
    eigen-tail multiplier held fixed."""

    data: ClosedLoopData
    structure: StructureSet
    weights: np.ndarray
    lam1: float = 0.5
    lam2: float = 0.1
    nu: float = 100.0
    tail_weight: np.ndarray = None
    delta_strict: float = DEFAULT_DELTA_STRICT

    def __post_init__(self):
        m, q = self.structure.shape
        dims = self.data.dims
        if (m, q) != (dims["m"], dims["q"]):
            raise ValueError("structure shape does not match the plant")
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (m, q):
            raise ValueError("weight matrix must be m x q")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be entrywise positive")
        if self.lam1 < 0.0 or self.lam2 < 0.0 or self.nu <= 0.0:
            raise ValueError("need lam1, lam2 >= 0 and nu > 0")
        order = consistency_order(self.data.n, m)
        if self.tail_weight is None:
            self.tail_weight = np.eye(order)
        self.tail_weight = np.asarray(self.tail_weight, dtype=float)
        if self.tail_weight.shape != (order, order):
            raise ValueError(f"tail weight must have order {order}")
        if np.abs(self.tail_weight - self.tail_weight.T).max() > 1e-10:
            raise ValueError("tail weight must be symmetric")
        lam = np.linalg.eigvalsh(self.tail_weight)
        if lam[0] < -1e-8 or lam[-1] > 1.0 + 1e-8:
            raise ValueError("tail weight must satisfy 0 <= Y <= I")


@dataclass
class ZPoint:
    """One feasible point of the synthesis program."""

    lyap_h2: np.ndarray      # 2n x 2n, > 0
    lyap_hinf: np.ndarray    # 2n x 2n, > 0
    cross_h2: np.ndarray     # 2n x m
    cross_hinf: np.ndarray   # 2n x m
    mult_h2: float
    mult_hinf: float
    h2_level: float          # certified squared-H2 deviation bound
    hinf_level: float        # certified Hinf deviation bound
    gain: np.ndarray         # m x q


@dataclass
class ZProgram:
    """Built synthesis program plus the metadata to re-cost and decode it."""

    prog: ConicProgram
    data: ClosedLoopData
    structure: StructureSet
    allowed: list
    margins: dict = field(default_factory=dict)

    def objective(self, lam1, lam2, nu, weights, tail_weight) -> np.ndarray:
        c = np.zeros(self.prog.num_vars)
        blk = self.prog.block_by_name
        c[blk["h2_level"].offset] = 1.0
        c[blk["hinf_level"].offset] = lam1
        wvals = np.asarray(
            [weights[i, j] for i, j in self.allowed], dtype=float)
        pos = blk["gain_pos"]
        neg = blk["gain_neg"]
        c[pos.offset: pos.offset + pos.size] = lam2 * wvals
        c[neg.offset: neg.offset + neg.size] = lam2 * wvals
        cons = blk["consistency"]
        c[cons.offset: cons.offset + cons.size] = nu * svec_pack(tail_weight)
        return c

    def extract(self, sol: ConicSolution) -> tuple[ZPoint, np.ndarray]:
        z = ZPoint(
            lyap_h2=sol.value("lyap_h2"),
            lyap_hinf=sol.value("lyap_hinf"),
            cross_h2=sol.value("cross_h2"),
            cross_hinf=sol.value("cross_hinf"),
            mult_h2=sol.value("mult_h2"),
            mult_hinf=sol.value("mult_hinf"),
            h2_level=sol.value("h2_level"),
            hinf_level=sol.value("hinf_level"),
            gain=sol.value("gain"),
        )
        return z, sol.value("consistency")


def assemble_z_program(inst: LmiInstance) -> ZProgram:
    """Build the convex subproblem of the alternating scheme.

    Variables: both Lyapunov certificates (strictly positive via margin),
    their gain cross terms, the uncertainty multipliers, the two deviation
    levels, the admissible gain (split for the weighted l1 cost) and the
    PSD consistency block.  Objective:
    h2_level + lam1*hinf_level + lam2*||W o K||_1 + nu*<tail_weight, block>.
    """
    data = inst.data
    dims = data.dims
    two_n = data.a_fixed.shape[0]
    m, q = inst.structure.shape
    delta = inst.delta_strict

    builder = ProgramBuilder()
    x1 = builder.psd_mat("lyap_h2", two_n, shift=delta)
    x2 = builder.psd_mat("lyap_hinf", two_n, shift=delta)
    y1 = builder.free_mat("cross_h2", (two_n, m))
    y2 = builder.free_mat("cross_hinf", (two_n, m))
    eps1 = builder.nonneg_scalar("mult_h2", floor=delta)
    eps2 = builder.nonneg_scalar("mult_hinf", floor=delta)
    eps_s = builder.nonneg_scalar("h2_level")
    eps_y = builder.nonneg_scalar("hinf_level")

    allowed = inst.structure.allowed_indices()
    if not allowed:
        raise ValueError("structure set admits no gain entries")
    k_lin = builder.free_entries("gain", (m, q), allowed)
    k_pos = builder.nonneg_vec("gain_pos", len(allowed))
    k_neg = builder.nonneg_vec("gain_neg", len(allowed))
    for t, (i, j) in enumerate(allowed):
        builder.add_eq(k_lin[i, j] - k_pos[t] + k_neg[t], "gain_l1")
        lo = inst.structure.lower[i, j]
        hi = inst.structure.upper[i, j]
        if np.isfinite(lo):
            s = builder.nonneg_vec(f"gain_lo_{t}", 1)[0]
            builder.add_eq(k_lin[i, j] - s - lo, "gain_bounds")
        if np.isfinite(hi):
            s = builder.nonneg_vec(f"gain_hi_{t}", 1)[0]
            builder.add_eq(k_lin[i, j] + s - hi, "gain_bounds")

    # deviation-energy budget: Tr(Cerr X1 Cerr^T) < h2_level
    margin_tr = delta * max(1.0, float(np.linalg.norm(data.c_err, "fro") ** 2))
    s_tr = builder.nonneg_vec("trace_slack", 1)[0]
    builder.add_eq(_trace_congruence(data.c_err, x1) - eps_s + margin_tr + s_tr,
                   "trace")

    q1 = _sym_cross(x1, y1, data.a_fixed, data.b_gain)
    h2_blk = build_h2_block(data.b_dist, data.d_in, data.e_fixed, data.e_gain,
                            data.rho, q1, x1, y1, eps1)
    margin_h2 = delta * max(1.0, float(np.linalg.norm(
        data.b_dist @ data.b_dist.T, "fro")))
    builder.add_neg_def(h2_blk, margin_h2, "h2_slack", "h2_block")

    q2 = _sym_cross(x2, y2, data.a_fixed, data.b_gain)
    hinf_blk = build_hinf_block(data.b_dist, data.c_err, data.d_in,
                                data.e_fixed, data.e_gain, data.rho,
                                x2, q2, y2, eps2, eps_y)
    margin_hinf = delta * max(1.0, float(np.linalg.norm(data.b_dist, "fro")))
    builder.add_neg_def(hinf_blk, margin_hinf, "hinf_slack", "hinf_block")

    build_consistency(builder, "consistency", x1, y1, x2, y2, k_lin,
                      data.c_gain, "consistency_pin")

    prog = builder.build()
    zprog = ZProgram(prog=prog, data=data, structure=inst.structure,
                     allowed=allowed,
                     margins={"trace": margin_tr, "h2": margin_h2,
                              "hinf": margin_hinf, "strict": delta})
    prog.c[:] = zprog.objective(inst.lam1, inst.lam2, inst.nu, inst.weights,
                                inst.tail_weight)
    return zprog


# -- fixed-gain certification --------------------------------------------------

def robust_h2_program(a, b, c, d, e, rho, delta_strict=DEFAULT_DELTA_STRICT):
    """Minimal certified squared-H2 bound for an uncertain system
    (A + D Delta E, B, C), Delta' Delta <= rho^2 I."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    e = np.atleast_2d(np.asarray(e, dtype=float))
    n = a.shape[0]
    builder = ProgramBuilder()
    x = builder.psd_mat("lyap", n, shift=delta_strict)
    eps = builder.nonneg_scalar("mult", floor=delta_strict)
    gamma = builder.nonneg_scalar("level")
    margin_tr = delta_strict * max(1.0, float(np.linalg.norm(c, "fro") ** 2))
    s_tr = builder.nonneg_vec("trace_slack", 1)[0]
    builder.add_eq(_trace_congruence(c, x) - gamma + margin_tr + s_tr, "trace")
    xa = expr.rmul(x, a.T)
    q_lin = expr.add(xa, xa.T)
    ex = expr.lmul(e, x)
    j = e.shape[0]
    sq = math.sqrt(rho)
    top = expr.add(q_lin, expr.const_mat(b @ b.T))
    if rho > 0.0:
        top = expr.add(top, _scalar_times(rho * (d @ d.T), eps))
    blk = expr.block([
        [top, expr.scale(ex.T, sq)],
        [expr.scale(ex, sq), _scalar_times(-np.eye(j), eps)],
    ])
    margin = delta_strict * max(1.0, float(np.linalg.norm(b @ b.T, "fro")))
    builder.add_neg_def(blk, margin, "slack", "h2_block")
    prog = builder.build()
    prog.c[prog.block_by_name["level"].offset] = 1.0
    return prog


def robust_hinf_program(a, b, c, d, e, rho, delta_strict=DEFAULT_DELTA_STRICT):
    """Minimal certified Hinf bound for an uncertain system."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    e = np.atleast_2d(np.asarray(e, dtype=float))
    n = a.shape[0]
    p = b.shape[1]
    qdim = c.shape[0]
    j = e.shape[0]
    builder = ProgramBuilder()
    x = builder.psd_mat("lyap", n, shift=delta_strict)
    eps = builder.nonneg_scalar("mult", floor=delta_strict)
    gamma = builder.nonneg_scalar("level")
    xa = expr.rmul(x, a.T)
    q_lin = expr.add(xa, xa.T)
    top = q_lin
    if rho > 0.0:
        top = expr.add(top, _scalar_times(rho * (d @ d.T), eps))
    cx = expr.lmul(c, x)
    ex = expr.lmul(e, x)
    sq = math.sqrt(rho)
    b_const = expr.const_mat(b)
    z_pq = expr.zeros((p, qdim))
    z_pj = expr.zeros((p, j))
    z_qj = expr.zeros((qdim, j))
    blk = expr.block([
        [top, b_const, cx.T, expr.scale(ex.T, sq)],
        [b_const.T, _scalar_times(-np.eye(p), gamma), z_pq, z_pj],
        [cx, z_pq.T, _scalar_times(-np.eye(qdim), gamma), z_qj],
        [expr.scale(ex, sq), z_pj.T, z_qj.T, _scalar_times(-np.eye(j), eps)],
    ])
    margin = delta_strict * max(1.0, float(np.linalg.norm(b, "fro")))
    builder.add_neg_def(blk, margin, "slack", "hinf_block")
    prog = builder.build()
    prog.c[prog.block_by_name["level"].offset] = 1.0
    return prog


@dataclass
class CertifiedBounds:
    h2_squared: float     # certified bound on the squared H2 deviation
    hinf: float           # certified bound on the Hinf deviation
    h2_status: str
    hinf_status: str


def certify_gain(data: ClosedLoopData, k, delta_strict=DEFAULT_DELTA_STRICT,
                 tol_feas=1e-8, tol_gap=1e-7, max_iters=200_000) -> CertifiedBounds:
    """Certify a fixed gain: solve the two robust-norm programs for the
    stacked deviation system with the gain substituted in."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    a_cl = data.closed_a(k)
    e_cl = data.closed_e(k)
    p_h2 = robust_h2_program(a_cl, data.b_dist, data.c_err, data.d_in, e_cl,
                             data.rho, delta_strict)
    p_hinf = robust_hinf_program(a_cl, data.b_dist, data.c_err, data.d_in,
                                 e_cl, data.rho, delta_strict)
    opts = dict(tol_feas=tol_feas, tol_gap=tol_gap, max_iters=max_iters)
    sol_h2 = SplittingSolver(p_h2, **opts).solve(warm=False)
    sol_hinf = SplittingSolver(p_hinf, **opts).solve(warm=False)
    h2_val = sol_h2.value("level") if sol_h2.status == "optimal" else np.inf
    hinf_val = sol_hinf.value("level") if sol_hinf.status == "optimal" else np.inf
    return CertifiedBounds(h2_squared=float(h2_val), hinf=float(hinf_val),
                           h2_status=sol_h2.status, hinf_status=sol_hinf.status)
