"""Complementarity reformulations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ..model import BoundSide, BoundsSpec, ComplementarityPair

DEFAULT_DELTA = 1e-6
DEFAULT_RHO = 1.0


@dataclass(frozen=True)
class PerPairFixed:
    """Each pair's product <= delta, delta constant."""

    delta: float = DEFAULT_DELTA


@dataclass(frozen=True)
class AggregatedFixed:
    """Sum of the pair products of one element <= delta, delta constant."""

    delta: float = DEFAULT_DELTA


@dataclass(frozen=True)
class PerPairBarrier:
    """Per-pair relaxation with delta tied to the barrier parameter."""


@dataclass(frozen=True)
class AggregatedBarrier:
    """Aggregated relaxation with delta tied to the barrier parameter."""


@dataclass(frozen=True)
class PenaltyObjective:
    """No constraints; rho times every product is added to the objective."""

    rho: float = DEFAULT_RHO


RelaxationMode = Union[PerPairFixed, AggregatedFixed, PerPairBarrier, AggregatedBarrier, PenaltyObjective]

MODE_NAMES = {
    "per-pair-fixed": PerPairFixed,
    "aggregated-fixed": AggregatedFixed,
    "per-pair-barrier": PerPairBarrier,
    "aggregated-barrier": AggregatedBarrier,
    "penalty": PenaltyObjective,
}


def make_mode(name: str, delta: float | None = None, rho: float | None = None) -> RelaxationMode:
    try:
        cls = MODE_NAMES[name]
    except KeyError:
        raise ValueError(f"unknown relaxation mode {name!r}; choose from {sorted(MODE_NAMES)}")
    if cls in (PerPairFixed, AggregatedFixed):
        return cls(DEFAULT_DELTA if delta is None else float(delta))
    if cls is PenaltyObjective:
        return cls(DEFAULT_RHO if rho is None else float(rho))
    return cls()


def mode_name(mode: RelaxationMode) -> str:
    for k, v in MODE_NAMES.items():
        if type(mode) is v:
            return k
    raise ValueError(f"not a relaxation mode: {mode!r}")


def check_mode(mode: RelaxationMode):
    if isinstance(mode, (PerPairFixed, AggregatedFixed)) and not mode.delta > 0:
        raise ValueError("relaxation delta must be positive")
    if isinstance(mode, PenaltyObjective) and not mode.rho > 0:
        raise ValueError("penalty weight rho must be positive")
    if not isinstance(mode, (PerPairFixed, AggregatedFixed, PerPairBarrier, AggregatedBarrier, PenaltyObjective)):
        raise TypeError(f"not a relaxation mode: {mode!r}")


def is_aggregated(mode) -> bool:
    return isinstance(mode, (AggregatedFixed, AggregatedBarrier))


def is_barrier_linked(mode) -> bool:
    return isinstance(mode, (PerPairBarrier, AggregatedBarrier))


def is_penalty(mode) -> bool:
    return isinstance(mode, PenaltyObjective)


def alpha_sign(side_a: BoundSide, side_b: BoundSide) -> int:
    """+1 when both factors use the same kind of bound, -1 otherwise."""
    return 1 if side_a == side_b else -1


def selected_bounds(pairs: Sequence[ComplementarityPair], bounds: BoundsSpec):
    """Bound values nu_a, nu_b picked by each pair's sides."""
    nu_a = np.empty(len(pairs))
    nu_b = np.empty(len(pairs))
    for k, pr in enumerate(pairs):
        nu_a[k] = bounds.y_lb[pr.idx_a] if pr.side_a is BoundSide.LOWER else bounds.y_ub[pr.idx_a]
        nu_b[k] = bounds.y_lb[pr.idx_b] if pr.side_b is BoundSide.LOWER else bounds.y_ub[pr.idx_b]
    if not (np.all(np.isfinite(nu_a)) and np.all(np.isfinite(nu_b))):
        raise ValueError("non-finite complementarity bound")
    return nu_a, nu_b


def complementarity_terms(pairs: Sequence[ComplementarityPair], y, bounds: BoundsSpec) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    nu_a, nu_b = selected_bounds(pairs, bounds)
    alpha = np.array([alpha_sign(p.side_a, p.side_b) for p in pairs], dtype=float)
    ia = np.array([p.idx_a for p in pairs], dtype=int)
    ib = np.array([p.idx_b for p in pairs], dtype=int)
    return alpha * (y[ia] - nu_a) * (y[ib] - nu_b)


def product_function(pairs: Sequence[ComplementarityPair], n_y: int, aggregate: bool):
    """Function of ``[y, nu_a, nu_b]`` returning the signed products (or their sum)."""
    n_c = len(pairs)
    alpha = [float(alpha_sign(p.side_a, p.side_b)) for p in pairs]

    def fn(v):
        y = v[:n_y]
        nu_a = v[n_y : n_y + n_c]
        nu_b = v[n_y + n_c : n_y + 2 * n_c]
        terms = [alpha[k] * (y[p.idx_a] - nu_a[k]) * (y[p.idx_b] - nu_b[k]) for k, p in enumerate(pairs)]
        if aggregate:
            total = terms[0]
            for t in terms[1:]:
                total = total + t
            return [total]
        return terms

    return fn
