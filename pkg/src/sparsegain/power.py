"""Swing-equation front end: generator networks, the linearized state model,
single-link uncertainty injection, and the LQR reference gain.

State ordering is x = [theta; omega] (rotor angles then speeds), so

    A = [[0, I], [-M^{-1} L, -M^{-1} D]],   B1 = B2 = [0; M^{-1}],   C = I.

The reduced susceptance matrix is an *input*: real network values are not
bundled, only clearly-labeled synthetic demonstration networks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .matops import solve_care
from .uncertain import UncertainLti

__all__ = [
    "LinkUncertainty",
    "PowerNetwork",
    "laplacian_from_kron",
    "link_uncertainty",
    "lqr_baseline",
    "swing_model",
    "synthetic_net3",
    "synthetic_net10",
    "uncertain_swing_model",
]


@dataclass
class PowerNetwork:
    """Generator inertias/dampings plus the reduced susceptance matrix."""

    inertia: np.ndarray
    damping: np.ndarray
    b_kron: np.ndarray
    labels: list = None
    note: str = ""

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).ravel()
        self.damping = np.asarray(self.damping, dtype=float).ravel()
        self.b_kron = np.asarray(self.b_kron, dtype=float)
        n = self.inertia.size
        if self.damping.size != n:
            raise ValueError("inertia and damping lengths differ")
        if np.any(self.inertia <= 0.0) or np.any(self.damping <= 0.0):
            raise ValueError("inertia and damping must be positive")
        if self.b_kron.shape != (n, n):
            raise ValueError("susceptance matrix has the wrong shape")
        if np.abs(self.b_kron - self.b_kron.T).max() > 1e-12:
            raise ValueError("susceptance matrix must be symmetric")
        if np.any(np.abs(np.diag(self.b_kron)) > 1e-12):
            raise ValueError("susceptance diagonal must be zero")
        if np.any(self.b_kron < 0.0):
            raise ValueError("susceptances must be nonnegative")
        if self.labels is None:
            self.labels = [f"G{k + 1}" for k in range(n)]

    @property
    def n_gen(self) -> int:
        return self.inertia.size

    def to_json(self) -> dict:
        return {
            "format": "sparsegain-network-v1",
            "n_gen": self.n_gen,
            "inertia": self.inertia.tolist(),
            "damping": self.damping.tolist(),
            "b_kron": self.b_kron.tolist(),
            "labels": list(self.labels),
            "note": self.note,
        }

    @staticmethod
    def from_json(doc: dict) -> "PowerNetwork":
        return PowerNetwork(
            inertia=doc["inertia"], damping=doc["damping"],
            b_kron=doc["b_kron"], labels=doc.get("labels"),
            note=doc.get("note", ""),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @staticmethod
    def load(path) -> "PowerNetwork":
        with open(path) as fh:
            return PowerNetwork.from_json(json.load(fh))


def laplacian_from_kron(b_kron) -> np.ndarray:
    """Network Laplacian: l_ij = -b_ij, l_ii = sum_k b_ik (zero row sums)."""
    b = np.asarray(b_kron, dtype=float)
    if np.abs(b - b.T).max() > 1e-12:
        raise ValueError("susceptance matrix must be symmetric")
    lap = -b.copy()
    np.fill_diagonal(lap, 0.0)
    np.fill_diagonal(lap, -lap.sum(axis=1))
    return lap


def swing_model(net: PowerNetwork) -> UncertainLti:
    """Linearized swing dynamics as an uncertain plant with rho = 0.

    Full state feedback (C = I); the uncertainty maps are zero placeholders
    shaped for a single scalar uncertainty channel.
    """
    ng = net.n_gen
    n = 2 * ng
    m_inv = np.diag(1.0 / net.inertia)
    lap = laplacian_from_kron(net.b_kron)
    a = np.block([
        [np.zeros((ng, ng)), np.eye(ng)],
        [-m_inv @ lap, -m_inv @ np.diag(net.damping)],
    ])
    b1 = np.vstack([np.zeros((ng, ng)), m_inv])
    return UncertainLti(
        a=a, b1=b1, b2=b1.copy(), c=np.eye(n),
        d=np.zeros((n, 1)), e_a=np.zeros((1, n)), e_b1=np.zeros((1, ng)),
        rho=0.0,
    )


@dataclass
class LinkUncertainty:
    """Scalar uncertainty on the coupling of one generator pair."""

    i1: int
    i2: int
    rho_rel: float
    rho: float
    d: np.ndarray
    e_a: np.ndarray
    e_b1: np.ndarray

    def apply(self, sys: UncertainLti) -> UncertainLti:
        return UncertainLti(
            a=sys.a, b1=sys.b1, b2=sys.b2, c=sys.c,
            d=self.d, e_a=self.e_a, e_b1=self.e_b1, rho=self.rho,
        )


def link_uncertainty(net: PowerNetwork, i1: int, i2: int,
                     rho_rel: float) -> LinkUncertainty:
    """Rank-one uncertainty channel for the (i1, i2) link, 0-based indices.

    The radius is rho_rel * b_{i1 i2} when the link exists; otherwise the
    fallback rho_rel * min(row-sum at i1, row-sum at i2).
    """
    ng = net.n_gen
    if not (0 <= i1 < ng and 0 <= i2 < ng):
        raise ValueError("generator index out of range")
    if i1 == i2:
        raise ValueError("link endpoints must differ")
    if rho_rel < 0.0:
        raise ValueError("rho_rel must be nonnegative")
    n = 2 * ng
    b12 = net.b_kron[i1, i2]
    if b12 > 0.0:
        rho = rho_rel * b12
    else:
        sums = net.b_kron.sum(axis=1)
        rho = rho_rel * min(sums[i1], sums[i2])
    pick = np.zeros(n)
    pick[ng + i1] = 1.0
    pick[ng + i2] = -1.0
    block = np.zeros((n, n))
    block[ng:, ng:] = np.diag(1.0 / net.inertia)
    d = -(block @ pick).reshape(n, 1)
    e_a = pick.reshape(1, n)
    e_b1 = np.zeros((1, ng))
    return LinkUncertainty(i1=i1, i2=i2, rho_rel=float(rho_rel),
                           rho=float(rho), d=d, e_a=e_a, e_b1=e_b1)


def uncertain_swing_model(net: PowerNetwork, i1: int, i2: int,
                          rho_rel: float) -> UncertainLti:
    """Swing model with the (i1, i2) link uncertainty attached."""
    return link_uncertainty(net, i1, i2, rho_rel).apply(swing_model(net))


def lqr_baseline(sys: UncertainLti, q=None, r=None) -> np.ndarray:
    """Reference gain K_hat = -R^{-1} B1^T P for u = K_hat x.

    Defaults Q = I, R = 10 I.  Requires C = I (state feedback); the sign
    convention makes A + B1 K_hat Hurwitz.
    """
    n, m = sys.n, sys.m
    if sys.q != n or np.abs(sys.c - np.eye(n)).max() > 1e-12:
        raise ValueError("LQR baseline requires full state feedback (C = I)")
    q = np.eye(n) if q is None else np.asarray(q, dtype=float)
    r = 10.0 * np.eye(m) if r is None else np.asarray(r, dtype=float)
    p = solve_care(sys.a, sys.b1, q, r)
    return -np.linalg.solve(r, sys.b1.T @ p)


def synthetic_net3() -> PowerNetwork:
    """Three-generator demonstration network (synthetic values, not from any
    published reduction)."""
    b = np.array([
        [0.0, 1.2, 0.8],
        [1.2, 0.0, 1.5],
        [0.8, 1.5, 0.0],
    ])
    return PowerNetwork(
        inertia=[4.0, 3.0, 2.5],
        damping=[5.0, 4.0, 4.0],
        b_kron=b,
        labels=["G1", "G2", "G3"],
        note="synthetic 3-generator demonstration network",
    )


def synthetic_net10() -> PowerNetwork:
    """Ten-generator demonstration network.

    Inertias and dampings follow the standard published per-unit study
    values (bus order G10, G2, ..., G1); the susceptance matrix is an
    invented synthetic placeholder because no reduced matrix is published.
    """
    inertia = [4.0, 3.0, 2.5, 4.0, 2.0, 3.5, 3.0, 2.5, 2.0, 6.0]
    damping = [5.0, 4.0, 4.0, 6.0, 3.5, 3.0, 7.5, 4.0, 6.5, 5.0]
    labels = ["G10", "G2", "G3", "G4", "G5", "G6", "G7", "G8", "G9", "G1"]
    ng = 10
    b = np.zeros((ng, ng))
    # ring backbone with varying strengths plus a few long-range ties
    ring = [1.6, 1.1, 0.9, 1.4, 0.7, 1.2, 1.0, 0.8, 1.3, 0.6]
    for k in range(ng):
        j = (k + 1) % ng
        b[k, j] = b[j, k] = ring[k]
    ties = {(0, 4): 0.5, (1, 6): 0.4, (2, 8): 0.45, (3, 7): 0.35, (5, 9): 0.3}
    for (i, j), val in ties.items():
        b[i, j] = b[j, i] = val
    return PowerNetwork(
        inertia=inertia, damping=damping, b_kron=b, labels=labels,
        note=("synthetic 10-generator demonstration network; standard "
              "per-unit inertias/dampings with an invented susceptance "
              "matrix (no published reduced matrix exists)"),
    )
