"""Solvers for anisotropic diffusion with variable, solution-dependent exponents."""

from .elliptic import (
    ContinuationParams,
    EllipticProblem,
    ExponentSpec,
    solve_elliptic,
    validate,
)
from .frozen import LineSearchStall, NewtonParams, NonConvergence, SolverError, solve_frozen
from .grid import FrozenProblem, Grid
from .parabolic import (
    NonlocalMap,
    ParabolicParams,
    ParabolicProblem,
    Trajectory,
    solve_parabolic,
    validate_parabolic,
)
from .spaces import ExponentField, luxemburg_norm, modular

__version__ = "0.1.0"

__all__ = [
    "ContinuationParams",
    "EllipticProblem",
    "ExponentField",
    "ExponentSpec",
    "FrozenProblem",
    "Grid",
    "LineSearchStall",
    "NewtonParams",
    "NonConvergence",
    "NonlocalMap",
    "ParabolicParams",
    "ParabolicProblem",
    "SolverError",
    "Trajectory",
    "luxemburg_norm",
    "modular",
    "solve_elliptic",
    "solve_frozen",
    "solve_parabolic",
    "validate",
    "validate_parabolic",
]
