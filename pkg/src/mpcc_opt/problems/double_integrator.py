"""Double integrator ``qddot = u``: minimum energy on a fixed horizon and minimum time with |u| bounded.

Both move from rest at 0 to rest at ``target``.  The continuous optima are known in closed form:
the minimum-energy input is linear in time with cost ``12 target^2 / T^3``, and the minimum-time
input is bang-bang with ``T* = 2 sqrt(target / u_max)``.
"""
from __future__ import annotations

import numpy as np

from ..model import BoundsSpec, FixedGrid, FreeDuration, OCPDefinition, OCPInfo


def _dynamics(xdot, x, y, u, p):
    return [xdot[0] - x[1], xdot[1] - u[0]]


def min_energy_cost(target: float = 1.0, T: float = 1.0) -> float:
    return 12.0 * target ** 2 / T ** 3


def min_time_optimum(target: float = 1.0, u_max: float = 6.0) -> float:
    return 2.0 * np.sqrt(target / u_max)


def _guess_factory(target, T):
    def guess(t):
        s = min(max(t / T, 0.0), 1.0)
        # cubic rest-to-rest profile
        q = target * (3 * s ** 2 - 2 * s ** 3)
        v = target * (6 * s - 6 * s ** 2) / T
        a = target * (6 - 12 * s) / T ** 2
        return np.array([q, v]), np.array([v, a]), np.zeros(0), np.array([a])

    return guess


def double_integrator_ocp(n_e: int = 20, T: float = 1.0, target: float = 1.0) -> OCPDefinition:
    """Minimum ``int u^2 dt`` from (0, 0) to (target, 0) in ``T`` seconds."""
    bounds = BoundsSpec.free(2, 0, 1, x_final_lb=[target, 0.0], x_final_ub=[target, 0.0])
    return OCPDefinition(
        info=OCPInfo(2, 0, 1, 0, 0, n_e, FixedGrid.uniform(T, n_e)),
        bounds=bounds,
        initial_state=np.zeros(2),
        dynamics=_dynamics,
        running_cost=lambda x, y, u, p: u[0] * u[0],
        initial_guess=_guess_factory(target, T),
        name="double-integrator",
    )


def double_integrator_min_time_ocp(n_e: int = 20, u_max: float = 6.0, target: float = 1.0,
                                   T_bounds=(0.1, 5.0)) -> OCPDefinition:
    """Minimum final time from (0, 0) to (target, 0) with ``|u| <= u_max``."""
    bounds = BoundsSpec.free(2, 0, 1, u_lb=[-u_max], u_ub=[u_max],
                             x_final_lb=[target, 0.0], x_final_ub=[target, 0.0])
    T_guess = 0.5 * (T_bounds[0] + T_bounds[1])
    return OCPDefinition(
        info=OCPInfo(2, 0, 1, 0, 0, n_e, FreeDuration(*T_bounds)),
        bounds=bounds,
        initial_state=np.zeros(2),
        dynamics=_dynamics,
        initial_guess=_guess_factory(target, T_guess),
        minimum_time=True,
        name="double-integrator-min-time",
    )
