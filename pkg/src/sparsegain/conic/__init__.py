"""Linear-objective conic programming over free/nonnegative/PSD blocks."""

from ._kernels import BACKEND as kernel_backend
from .program import ConicProgram, ConicSolution, ProgramBuilder
from .solver import SplittingSolver, solve

__all__ = [
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "SplittingSolver",
    "kernel_backend",
    "solve",
]
