"""Quasi-static planar pushing of a square slider.

The slider's body twist follows an ellipsoidal limit surface,
``t = 2 L w`` with ``L = diag(1/f_max^2, 1/f_max^2, 1/tau_max^2)``.  The pusher
touches the left face (``p_x = -a/2``) at offset ``p_y``; sliding of the contact
point along the face is split into ``pdot_plus - pdot_minus``, each
complementary to the distance of the tangential force from one edge of the
friction cone.

Variables of the goal problem:

    x = (x, y, theta, p_y)       u = (f_n, f_t)
    y = (pdot_plus, pdot_minus, s_a, s_b),   s_a = mu f_n - f_t,  s_b = mu f_n + f_t
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..model import (
    BoundSide,
    BoundsSpec,
    ComplementarityPair,
    FixedGrid,
    FreeDuration,
    OCPDefinition,
    OCPInfo,
)
from ..transcription import Phase, PhaseSequence

FACE_ANGLES = {"left": 0.0, "top": -np.pi / 2, "right": np.pi, "bottom": np.pi / 2}


@dataclass(frozen=True)
class PusherSliderParams:
    side: float = 0.09  # a, metres
    mu_p: float = 0.3
    f_max: float = 1.0
    tau_max: float = 0.0344  # f_max * mean |r| over a uniform square, 0.3826 * a
    fn_max: float = 0.5
    pdot_max: float = 0.5

    def __post_init__(self):
        for k in ("side", "mu_p", "f_max", "tau_max", "fn_max", "pdot_max"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")

    @property
    def half_side(self) -> float:
        return 0.5 * self.side

    @property
    def c(self) -> float:
        return self.tau_max / self.f_max


def limit_surface_twist(w, params: PusherSliderParams):
    """Body twist ``(v_x, v_y, omega)`` for wrench ``w = (f_n, f_t, tau)``."""
    fm2 = params.f_max ** 2
    tm2 = params.tau_max ** 2
    return np.array([2.0 * w[0] / fm2, 2.0 * w[1] / fm2, 2.0 * w[2] / tm2], dtype=object if _symbolic(w) else float)


def _symbolic(v) -> bool:
    return any(not isinstance(e, (int, float, np.integer, np.floating)) for e in v)


def _world_rows(xdot, theta, t):
    c, s = np.cos(theta), np.sin(theta)
    return [xdot[0] - (c * t[0] - s * t[1]), xdot[1] - (s * t[0] + c * t[1]), xdot[2] - t[2]]


def pusher_slider_residual(xdot, x, y, u, params: PusherSliderParams):
    """Six residuals: world-frame pose rates, contact sliding, friction-cone slacks."""
    fn, ft = u[0], u[1]
    p_y = x[3]
    tau = -p_y * fn - params.half_side * ft
    t = limit_surface_twist((fn, ft, tau), params)
    rows = _world_rows(xdot, x[2], t)
    rows.append(xdot[3] - (y[0] - y[1]))
    rows.append(y[2] - (params.mu_p * fn - ft))
    rows.append(y[3] - (params.mu_p * fn + ft))
    return rows


PUSHER_PAIRS = (
    ComplementarityPair(0, 2, BoundSide.LOWER, BoundSide.LOWER),
    ComplementarityPair(1, 3, BoundSide.LOWER, BoundSide.LOWER),
)


@dataclass(frozen=True)
class PusherCost:
    q_pose: tuple = (10.0, 10.0, 1.0)
    r_force: tuple = (0.1, 0.1)
    r_slide: float = 0.1


def pusher_goal_ocp(x_init=(0.0, 0.0, 0.0), x_goal=(0.0, 0.5, np.pi), n_e: int = 50, T: float = 5.0,
                    params: PusherSliderParams = PusherSliderParams(), cost: PusherCost = PusherCost(),
                    pin_goal: bool = True) -> OCPDefinition:
    """Reach ``x_goal`` from ``x_init`` with the pusher starting at ``p_y = 0``."""
    x_init = np.asarray(x_init, dtype=float)
    x_goal = np.asarray(x_goal, dtype=float)
    a2 = params.half_side
    inf = np.inf
    bounds = BoundsSpec.free(
        4, 4, 2,
        x_lb=[-inf, -inf, -inf, -a2], x_ub=[inf, inf, inf, a2],
        y_lb=[0.0, 0.0, 0.0, 0.0], y_ub=[params.pdot_max, params.pdot_max, inf, inf],
        u_lb=[0.0, -params.fn_max], u_ub=[params.fn_max, params.fn_max],
    )
    if pin_goal:
        bounds.x_final_lb = np.concatenate([x_goal, [-a2]])
        bounds.x_final_ub = np.concatenate([x_goal, [a2]])
    q = np.asarray(cost.q_pose)
    rf = np.asarray(cost.r_force)

    def running(x, y, u, p):
        e = [x[k] - x_goal[k] for k in range(3)]
        return (sum(q[k] * e[k] * e[k] for k in range(3))
                + rf[0] * u[0] * u[0] + rf[1] * u[1] * u[1]
                + cost.r_slide * (y[0] * y[0] + y[1] * y[1]))

    def guess(t):
        s = min(max(t / T, 0.0), 1.0)
        pose = (1 - s) * x_init + s * x_goal
        rate = (x_goal - x_init) / T
        return (np.concatenate([pose, [0.0]]), np.concatenate([rate, [0.0]]),
                np.array([0.0, 0.0, params.mu_p * 0.1, params.mu_p * 0.1]), np.array([0.1, 0.0]))

    return OCPDefinition(
        info=OCPInfo(4, 4, 2, 0, 2, n_e, FixedGrid.uniform(T, n_e)),
        bounds=bounds,
        initial_state=np.concatenate([x_init, [0.0]]),
        dynamics=lambda xd, x, y, u, p: pusher_slider_residual(xd, x, y, u, params),
        running_cost=running,
        complementarity=list(PUSHER_PAIRS),
        initial_guess=guess,
        name="pusher",
    )


# --------------------------------------------------------------------------
# sticking contact on a chosen face


def face_residual(xdot, x, y, u, params: PusherSliderParams, face: str):
    """Sticking contact at the centre of ``face``: 3 pose rows and 2 cone slacks."""
    phi = FACE_ANGLES[face]
    cph, sph = np.cos(phi), np.sin(phi)
    fn, ft = u[0], u[1]
    # contact force and point in the body frame, rotated from the left-face pose
    fx, fy = cph * fn - sph * ft, sph * fn + cph * ft
    rx, ry = -cph * params.half_side, -sph * params.half_side
    tau = rx * fy - ry * fx
    t = limit_surface_twist((fx, fy, tau), params)
    rows = _world_rows(xdot, x[2], t)
    rows.append(y[0] - (params.mu_p * fn - ft))
    rows.append(y[1] - (params.mu_p * fn + ft))
    return rows


def pusher_face_ocp(face: str, x_start, n_e: int, duration=(0.05, 30.0), x_goal=None,
                    params: PusherSliderParams = PusherSliderParams(), r_force: float = 1e-3,
                    name: str = "") -> OCPDefinition:
    x_start = np.asarray(x_start, dtype=float)
    bounds = BoundsSpec.free(3, 2, 2, y_lb=[0.0, 0.0], u_lb=[0.0, -params.fn_max],
                             u_ub=[params.fn_max, params.fn_max])
    if x_goal is not None:
        bounds.x_final_lb = np.asarray(x_goal, dtype=float)
        bounds.x_final_ub = np.asarray(x_goal, dtype=float)
    mid = 0.5 * (duration[0] + duration[1])
    end = x_start if x_goal is None else np.asarray(x_goal, dtype=float)

    def guess(t):
        s = min(max(t / mid, 0.0), 1.0)
        return ((1 - s) * x_start + s * end, (end - x_start) / mid,
                np.array([0.03, 0.03]), np.array([0.1, 0.0]))

    return OCPDefinition(
        info=OCPInfo(3, 2, 2, 0, 0, n_e, FreeDuration(*duration)),
        bounds=bounds,
        initial_state=x_start,
        dynamics=lambda xd, x, y, u, p: face_residual(xd, x, y, u, params, face),
        running_cost=(lambda x, y, u, p: r_force * (u[0] * u[0] + u[1] * u[1])) if r_force > 0 else None,
        initial_guess=guess,
        minimum_time=True,
        name=name or f"pusher-{face}",
    )


def pusher_mode_sequence(x_init=(0.0, 0.0, 0.0), x_goal=(0.0, 0.0, np.pi), faces=("left", "top"),
                         n_e=(30, 30), duration=(0.05, 30.0),
                         params: PusherSliderParams = PusherSliderParams(),
                         r_force: float = 1e-3) -> PhaseSequence:
    """Fixed face sequence with one free duration per phase; the pose carries over."""
    if len(n_e) != len(faces):
        raise ValueError("need one element count per face")
    phases = []
    for k, face in enumerate(faces):
        goal = x_goal if k == len(faces) - 1 else None
        d = pusher_face_ocp(face, x_init, n_e[k], duration, goal, params, r_force, f"pusher-{k}-{face}")
        phases.append(Phase(d))
    return PhaseSequence(phases)


def with_params(p: PusherSliderParams, **kw) -> PusherSliderParams:
    return replace(p, **kw)
