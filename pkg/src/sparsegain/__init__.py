"""Robust sparsification of output-feedback gains for uncertain LTI systems.

The package takes a well-performing pre-designed gain, solves a bilinear
rank-penalized semidefinite program to prune its entries subject to H2/Hinf
deviation budgets under norm-bounded parametric uncertainty, and certifies
the result independently (norm oracles, uncertainty sampling, frequency
responses).  A swing-equation power-network front end builds the motivating
models.
"""

from . import analysis, conic, lmi, matops, power, sparsifier, uncertain
from .analysis import deviation_metrics, frequency_response, h2_norm, hinf_norm
from .power import lqr_baseline, swing_model, synthetic_net3, synthetic_net10
from .sparsifier import SparsifierOptions, SparsifierResult, sparsify
from .uncertain import StructureSet, UncertainLti

__version__ = "0.1.0"

__all__ = [
    "SparsifierOptions",
    "SparsifierResult",
    "StructureSet",
    "UncertainLti",
    "analysis",
    "conic",
    "deviation_metrics",
    "frequency_response",
    "h2_norm",
    "hinf_norm",
    "lmi",
    "lqr_baseline",
    "matops",
    "power",
    "sparsifier",
    "sparsify",
    "swing_model",
    "synthetic_net3",
    "synthetic_net10",
    "uncertain",
]
