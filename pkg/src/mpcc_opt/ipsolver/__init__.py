"""Primal-dual interior-point solver."""
from .kkt import Inertia, KKTSystem, SingularKKTError
from .options import SolverOptions
from .solver import (
    Direction,
    Iterate,
    LineSearchFailure,
    Solution,
    SolverEvaluationError,
    Status,
    fraction_to_boundary,
    kkt_residual,
    line_search,
    newton_direction,
    solve,
    update_barrier,
)

__all__ = [
    "Direction",
    "Inertia",
    "Iterate",
    "KKTSystem",
    "LineSearchFailure",
    "SingularKKTError",
    "Solution",
    "SolverEvaluationError",
    "SolverOptions",
    "Status",
    "fraction_to_boundary",
    "kkt_residual",
    "line_search",
    "newton_direction",
    "solve",
    "update_barrier",
]
