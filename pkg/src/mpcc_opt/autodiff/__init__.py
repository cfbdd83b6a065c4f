"""Tape-based automatic differentiation."""
from .derivatives import (
    evaluate,
    finite_difference_jacobian,
    gradient,
    hessian_lagrangian,
    hessian_sparsity,
    jacobian,
    jacobian_values,
    replay,
    sparsity,
    weighted_gradient,
    weighted_hessian,
)
from .ops import smooth_abs, smooth_max, smooth_min
from .tape import EvaluationError, RecordingError, SparsityPattern, Tape, Var, record

__all__ = [
    "EvaluationError",
    "RecordingError",
    "SparsityPattern",
    "Tape",
    "Var",
    "evaluate",
    "finite_difference_jacobian",
    "gradient",
    "hessian_lagrangian",
    "hessian_sparsity",
    "jacobian",
    "jacobian_values",
    "record",
    "replay",
    "smooth_abs",
    "smooth_max",
    "smooth_min",
    "sparsity",
    "weighted_gradient",
    "weighted_hessian",
]
