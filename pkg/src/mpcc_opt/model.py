"""Continuous-time problem contract.

An :class:`OCPDefinition` describes

    min   int c(x, y, u, p) dt + phi(x(t_f), p)
    s.t.  f(xdot, x, y, u, p) = 0,  x(t_0) = x_hat
          (y[a_l] - nu_a) * (y[b_l] - nu_b) = 0   for every complementarity pair
          bounds on x, xdot, y, u, p

where each complementarity factor is measured from the lower or upper bound
of its algebraic variable.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np


class BoundSide(enum.Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class FixedGrid:
    """Element widths in seconds."""

    widths: tuple

    def __init__(self, widths):
        object.__setattr__(self, "widths", tuple(float(h) for h in np.atleast_1d(widths)))

    @classmethod
    def uniform(cls, duration: float, n_elements: int) -> "FixedGrid":
        return cls([duration / n_elements] * n_elements)

    @property
    def duration(self) -> float:
        return float(np.sum(self.widths))


@dataclass(frozen=True)
class FreeDuration:
    """Horizon length is a decision variable in ``[lower, upper]`` seconds."""

    lower: float
    upper: float


Horizon = Union[FixedGrid, FreeDuration]


@dataclass(frozen=True)
class OCPInfo:
    n_x: int
    n_y: int
    n_u: int
    n_p: int
    n_c: int
    n_e: int
    horizon: Horizon
    t0: float = 0.0
    t_f: Optional[float] = None  # checked against the grid when given
    n_objects: int = 0


@dataclass(frozen=True)
class ComplementarityPair:
    idx_a: int
    idx_b: int
    side_a: BoundSide = BoundSide.LOWER
    side_b: BoundSide = BoundSide.LOWER


def _vec(v, n, fill):
    if v is None:
        return np.full(n, fill, dtype=float)
    return np.asarray(v, dtype=float).reshape(-1).copy()


@dataclass
class BoundsSpec:
    x_lb: np.ndarray
    x_ub: np.ndarray
    xdot_lb: np.ndarray
    xdot_ub: np.ndarray
    y_lb: np.ndarray
    y_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    x_final_lb: Optional[np.ndarray] = None
    x_final_ub: Optional[np.ndarray] = None
    p_lb: Optional[np.ndarray] = None
    p_ub: Optional[np.ndarray] = None

    @classmethod
    def free(cls, n_x: int, n_y: int, n_u: int, **given) -> "BoundsSpec":
        """Unbounded everywhere except for the entries passed by keyword."""
        inf = np.inf
        kw = {
            "x_lb": _vec(given.pop("x_lb", None), n_x, -inf),
            "x_ub": _vec(given.pop("x_ub", None), n_x, inf),
            "xdot_lb": _vec(given.pop("xdot_lb", None), n_x, -inf),
            "xdot_ub": _vec(given.pop("xdot_ub", None), n_x, inf),
            "y_lb": _vec(given.pop("y_lb", None), n_y, -inf),
            "y_ub": _vec(given.pop("y_ub", None), n_y, inf),
            "u_lb": _vec(given.pop("u_lb", None), n_u, -inf),
            "u_ub": _vec(given.pop("u_ub", None), n_u, inf),
        }
        for key in ("x_final_lb", "x_final_ub", "p_lb", "p_ub"):
            v = given.pop(key, None)
            kw[key] = None if v is None else np.asarray(v, dtype=float).reshape(-1).copy()
        if given:
            raise TypeError(f"unknown bounds: {sorted(given)}")
        return cls(**kw)

    def pairs(self):
        yield "x", self.x_lb, self.x_ub
        yield "xdot", self.xdot_lb, self.xdot_ub
        yield "y", self.y_lb, self.y_ub
        yield "u", self.u_lb, self.u_ub
        if self.x_final_lb is not None or self.x_final_ub is not None:
            yield "x_final", self.x_final_lb, self.x_final_ub
        if self.p_lb is not None or self.p_ub is not None:
            yield "p", self.p_lb, self.p_ub


InitialGuess = Callable[[float], tuple]


@dataclass
class OCPDefinition:
    """User problem.

    ``dynamics(xdot, x, y, u, p)`` returns ``n_x + n_y - n_c`` residuals.
    ``running_cost(x, y, u, p)`` returns a scalar; when ``signal`` is set it
    is called as ``running_cost(x, y, u, p, w)`` with ``w = signal(t_i)``, a
    known exogenous vector (e.g. measured data).  ``bounds`` is either a
    :class:`BoundsSpec` or a callable ``t -> BoundsSpec``.
    """

    info: OCPInfo
    bounds: Union[BoundsSpec, Callable[[float], BoundsSpec]]
    initial_state: np.ndarray
    dynamics: Callable
    running_cost: Optional[Callable] = None
    mayer_cost: Optional[Callable] = None
    complementarity: Sequence[ComplementarityPair] = field(default_factory=list)
    initial_guess: Optional[InitialGuess] = None
    initial_params: Optional[np.ndarray] = None
    minimum_time: bool = False
    signal: Optional[Callable[[float], np.ndarray]] = None
    object_hooks: Optional[dict] = None
    name: str = ""

    def bounds_at(self, t: float) -> BoundsSpec:
        if callable(self.bounds) and not isinstance(self.bounds, BoundsSpec):
            return self.bounds(t)
        return self.bounds

    def grid_times(self, duration: Optional[float] = None) -> np.ndarray:
        """Element end times t_0..t_{N_e}; ``duration`` fixes a free horizon."""
        info = self.info
        if isinstance(info.horizon, FixedGrid):
            h = np.asarray(info.horizon.widths)
        else:
            if duration is None:
                duration = 0.5 * (info.horizon.lower + info.horizon.upper)
            h = np.full(info.n_e, duration / info.n_e)
        return info.t0 + np.concatenate([[0.0], np.cumsum(h)])


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    y: np.ndarray
    u: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        n = self.times.size - 1
        if self.x.shape[0] != n + 1:
            raise ValueError("x must have one row per grid time")
        for name in ("xdot", "y", "u"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} must have one row per element")
        if n > 0 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_e(self) -> int:
        return self.times.size - 1


# --------------------------------------------------------------------------
# validation


class ValidationReport(list):
    """List of human-readable rule violations; empty means well formed."""

    @property
    def ok(self) -> bool:
        return not self


def _probe_dims(defn: OCPDefinition):
    """Residual count from one evaluation; only the shape matters, so float warnings are muted."""
    info = defn.info
    z = lambda k: np.ones(k)  # noqa: E731
    p = z(info.n_p) if defn.initial_params is None else np.asarray(defn.initial_params, dtype=float)
    with np.errstate(all="ignore"):
        out = defn.dynamics(z(info.n_x), z(info.n_x), z(info.n_y), z(info.n_u), p)
    return np.asarray(out, dtype=float).reshape(-1).size


def validate_definition(defn: OCPDefinition) -> ValidationReport:
    report = ValidationReport()
    info = defn.info
    counts = dict(n_x=info.n_x, n_y=info.n_y, n_u=info.n_u, n_p=info.n_p, n_c=info.n_c)
    for k, v in counts.items():
        if v < 0:
            report.append(f"negative count {k}={v}")
    if info.n_e < 1:
        report.append("N_e must be at least 1")
    if info.n_c > info.n_y:
        report.append("more complementarity pairs than algebraic variables")
    if len(defn.complementarity) != info.n_c:
        report.append(
            f"complementarity list has {len(defn.complementarity)} pairs, info says {info.n_c}"
        )

    hz = info.horizon
    if isinstance(hz, FixedGrid):
        if len(hz.widths) != info.n_e:
            report.append(f"grid has {len(hz.widths)} widths, N_e={info.n_e}")
        if any(not (h > 0) for h in hz.widths):
            report.append("element widths must be positive")
        if info.t_f is not None:
            span = info.t_f - info.t0
            if abs(hz.duration - span) > 1e-12 * max(1.0, abs(span)):
                report.append("element widths do not sum to t_f - t_0")
    elif isinstance(hz, FreeDuration):
        if not (hz.lower > 0):
            report.append("free duration lower bound must be positive")
        if hz.upper < hz.lower:
            report.append("free duration bounds are inverted")
        if not defn.minimum_time and defn.mayer_cost is None and defn.running_cost is None:
            report.append("missing objective for free duration")
    else:
        report.append("unknown horizon type")

    x_hat = np.asarray(defn.initial_state, dtype=float).reshape(-1)
    if x_hat.size != info.n_x:
        report.append(f"initial state has length {x_hat.size}, expected n_x={info.n_x}")

    try:
        bounds = defn.bounds_at(info.t0)
    except Exception as exc:  # user callable
        report.append(f"bounds query failed: {exc}")
        bounds = None
    if bounds is not None:
        sizes = {
            "x": info.n_x,
            "xdot": info.n_x,
            "y": info.n_y,
            "u": info.n_u,
            "x_final": info.n_x,
            "p": info.n_p,
        }
        for name, lb, ub in bounds.pairs():
            n = sizes[name]
            if lb is None or ub is None:
                report.append(f"{name} bounds need both sides")
                continue
            if lb.size != n or ub.size != n:
                report.append(f"{name} bounds have wrong length (expected {n})")
                continue
            if np.any(lb > ub):
                report.append(f"{name} lower bound exceeds upper bound")
        if info.n_p > 0 and (bounds.p_lb is None or bounds.p_ub is None):
            report.append("missing parameter bounds")
        for k, pair in enumerate(defn.complementarity):
            for idx, side in ((pair.idx_a, pair.side_a), (pair.idx_b, pair.side_b)):
                if not (0 <= idx < info.n_y):
                    report.append(f"complementarity pair {k} index {idx} out of range")
                    continue
                if bounds.y_lb.size != info.n_y:
                    continue
                b = bounds.y_lb[idx] if side is BoundSide.LOWER else bounds.y_ub[idx]
                if not np.isfinite(b):
                    report.append(f"non-finite complementarity bound (pair {k}, y[{idx}])")

    if info.n_p > 0 and defn.initial_params is None:
        report.append("missing initial parameter guess")

    if not report:
        try:
            n_res = _probe_dims(defn)
        except Exception as exc:
            report.append(f"dynamics evaluation failed: {exc}")
        else:
            want = info.n_x + info.n_y - info.n_c
            if n_res != want:
                report.append(f"dynamics returns {n_res} residuals, expected n_x+n_y-n_c={want}")
    return report


# --------------------------------------------------------------------------
# metrics


class DegenerateNormalizationError(ValueError):
    """An observed channel has zero range, so it cannot be normalized."""


def nrmse(observed: Trajectory, predicted: Trajectory, channels=None) -> float:
    """Mean over state channels of RMSE divided by the observed range."""
    if observed.x.shape != predicted.x.shape:
        raise ValueError("trajectories have different shapes")
    if not np.array_equal(observed.times, predicted.times):
        raise ValueError("trajectories are sampled at different times")
    if channels is None:
        channels = range(observed.x.shape[1])
    channels = list(channels)
    obs = observed.x[:, channels]
    pred = predicted.x[:, channels]
    span = obs.max(axis=0) - obs.min(axis=0)
    if np.any(span == 0):
        raise DegenerateNormalizationError("observed channel has zero range")
    rmse = np.sqrt(np.mean((pred - obs) ** 2, axis=0))
    return float(np.mean(rmse / span))
