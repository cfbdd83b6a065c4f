"""Linearised cart-pole whose pole tip meets two spring walls.

State ``x = (q_c, q_p, qdot_c, qdot_p)``, one force input on the cart, and wall
forces ``lam = (lam_1, lam_2)`` acting on the pole tip ``tip = q_c - l q_p``.
The walls sit at ``+d`` and ``-d``; the gaps are

    g_1 = lam_1 / k_1 + d - tip,      g_2 = lam_2 / k_2 + d + tip,

each complementary to its force.  Identified parameters are ``p = (m_p, k_1, k_2)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..model import (
    BoundSide,
    BoundsSpec,
    ComplementarityPair,
    FixedGrid,
    OCPDefinition,
    OCPInfo,
    Trajectory,
)

M_CART = 1.0
POLE_LENGTH = 0.5
GRAVITY = 9.81
WALL_OFFSET = 0.35

CARTPOLE_PAIRS = (
    ComplementarityPair(0, 2, BoundSide.LOWER, BoundSide.LOWER),
    ComplementarityPair(1, 3, BoundSide.LOWER, BoundSide.LOWER),
)

# parameter sets used by the Monte-Carlo harness, (m_p, k_1, k_2)
PARAM_SETS = (
    (0.3, 200.0, 300.0),
    (0.5, 250.0, 150.0),
    (0.2, 150.0, 250.0),
    (0.4, 100.0, 300.0),
)
# The open-loop system is unstable; a kick of the pole makes it bounce between both walls within
# the horizon for every seed, so both stiffnesses are identifiable.
SYSID_X0 = (0.0, 0.0, 0.0, 10.0)
SYSID_H = 0.005
SYSID_N = 200
PARAM_NAMES = ("m_p", "k_1", "k_2")
DEFAULT_P_BOUNDS = ((0.05, 5.0), (10.0, 1000.0), (10.0, 1000.0))


class LCSInconsistencyError(RuntimeError):
    """No active set of the per-step LCP is consistent."""


@dataclass
class LCSModel:
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    c: np.ndarray
    params: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float).reshape(-1, 1)
        self.D = np.asarray(self.D, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        shapes = {"A": (4, 4), "B": (4, 1), "D": (4, 2), "E": (2, 4), "F": (2, 2)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        if self.c.shape != (2,):
            raise ValueError("c must have length 2")
        if np.linalg.eigvalsh(self.F + self.F.T).min() < -1e-12:
            raise ValueError("F + F^T must be positive semidefinite")


def cartpole_lcs(p) -> LCSModel:
    m_p, k1, k2 = (float(v) for v in p)
    if min(m_p, k1, k2) <= 0:
        raise ValueError("cart-pole parameters must be positive")
    mc, ell, g, d = M_CART, POLE_LENGTH, GRAVITY, WALL_OFFSET
    A = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, g * m_p / mc, 0.0, 0.0],
        [0.0, g * (mc + m_p) / (ell * mc), 0.0, 0.0],
    ])
    B = np.array([0.0, 0.0, 1.0 / mc, 1.0 / (ell * mc)])
    D = np.zeros((4, 2))
    D[3] = [1.0 / (ell * m_p), -1.0 / (ell * m_p)]
    E = np.array([[-1.0, ell, 0.0, 0.0], [1.0, -ell, 0.0, 0.0]])
    F = np.diag([1.0 / k1, 1.0 / k2])
    return LCSModel(A, B, D, E, F, np.array([d, d]), np.array([m_p, k1, k2]))


def cartpole_softwall_residual(xdot, x, y, u, p):
    """Four dynamics rows ``xdot - (A x + B u + D lam)`` and the two gap definitions."""
    m_p, k1, k2 = p[0], p[1], p[2]
    mc, ell, g, d = M_CART, POLE_LENGTH, GRAVITY, WALL_OFFSET
    lam1, lam2, g1, g2 = y[0], y[1], y[2], y[3]
    tip = x[0] - ell * x[1]
    return [
        xdot[0] - x[2],
        xdot[1] - x[3],
        xdot[2] - (g * m_p / mc * x[1] + u[0] / mc),
        xdot[3] - (g * (mc + m_p) / (ell * mc) * x[1] + u[0] / (ell * mc) + (lam1 - lam2) / (ell * m_p)),
        g1 - (lam1 / k1 + d - tip),
        g2 - (lam2 / k2 + d + tip),
    ]


# --------------------------------------------------------------------------
# time-stepping oracle


def _lcp_enumerate(Q, q, tol=1e-12):
    """Solve ``0 <= lam  _|_  Q lam + q >= 0`` for two contacts by active-set enumeration."""
    for active in ((), (0,), (1,), (0, 1)):
        lam = np.zeros(2)
        idx = list(active)
        if idx:
            try:
                lam[idx] = np.linalg.solve(Q[np.ix_(idx, idx)], -q[idx])
            except np.linalg.LinAlgError:
                continue
        gap = Q @ lam + q
        if lam.min() >= -tol and gap.min() >= -tol:
            return np.maximum(lam, 0.0), np.maximum(gap, 0.0)
    raise LCSInconsistencyError("no active set satisfies lam >= 0 and gap >= 0")


def lcs_step(model: LCSModel, x, u, h):
    """One implicit-Euler step.  Returns ``(x_next, lam, gap)``."""
    M = np.linalg.inv(np.eye(4) - h * model.A)
    free = M @ (np.asarray(x, dtype=float) + h * model.B[:, 0] * float(u))
    MD = h * M @ model.D
    Q = model.E @ MD + model.F
    q = model.E @ free + model.c
    lam, gap = _lcp_enumerate(Q, q)
    return free + MD @ lam, lam, gap


def simulate_lcs(model: LCSModel, x0, u_seq, h: float, N: Optional[int] = None) -> Trajectory:
    """Implicit-Euler trajectory; ``u_seq[k]`` acts on the step from ``t_k`` to ``t_{k+1}``."""
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1)
    if N is None:
        N = u_seq.size
    if u_seq.size < N:
        raise ValueError(f"need {N} inputs, got {u_seq.size}")
    if not h > 0:
        raise ValueError("step size must be positive")
    x = np.zeros((N + 1, 4))
    x[0] = x0
    xdot = np.zeros((N, 4))
    y = np.zeros((N, 4))
    for k in range(N):
        x[k + 1], lam, gap = lcs_step(model, x[k], u_seq[k], h)
        xdot[k] = (x[k + 1] - x[k]) / h
        y[k] = np.concatenate([lam, gap])
    return Trajectory(np.arange(N + 1) * h, x, xdot, y, u_seq[:N].reshape(-1, 1).copy(), model.params.copy())


# --------------------------------------------------------------------------
# inputs and data


@dataclass(frozen=True)
class SumOfSines:
    amplitude: tuple
    omega: tuple
    phase: tuple

    @classmethod
    def draw(cls, rng: np.random.Generator, terms: int = 3) -> "SumOfSines":
        a = rng.uniform(0.5, 2.0, terms)
        w = rng.uniform(0.5, 3.0, terms)
        phi = rng.uniform(0.0, 2 * np.pi, terms)
        return cls(tuple(a), tuple(w), tuple(phi))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return sum(a * np.sin(w * t + f) for a, w, f in zip(self.amplitude, self.omega, self.phase))


@dataclass
class SysIdDataset:
    observed: Trajectory
    inputs: np.ndarray
    sigma: float
    seed: int
    h: float
    x0: np.ndarray
    true_params: Optional[np.ndarray] = None
    clean: Optional[Trajectory] = None

    @property
    def n_steps(self) -> int:
        return self.inputs.size


def generate_sysid_data(true_p, sigma: float, seed: int, N: int = SYSID_N, h: float = SYSID_H,
                        x0=SYSID_X0) -> SysIdDataset:
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)
    u_fun = SumOfSines.draw(rng)
    u = u_fun(np.arange(N) * h)
    model = cartpole_lcs(true_p)
    clean = simulate_lcs(model, np.asarray(x0, dtype=float), u, h, N)
    noise = rng.standard_normal(clean.x.shape)
    x_obs = clean.x + sigma * noise
    observed = Trajectory(clean.times.copy(), x_obs, clean.xdot.copy(), clean.y.copy(), clean.u.copy(),
                          np.zeros(0))
    return SysIdDataset(observed, u, float(sigma), int(seed), float(h), np.asarray(x0, dtype=float).copy(),
                        np.asarray(true_p, dtype=float).copy(), clean)


def save_dataset(ds: SysIdDataset, path, reveal_truth: bool = False) -> None:
    """CSV (t, x0..x3, u0; u blank on the last row) plus a ``.json`` sidecar."""
    path = Path(path)
    lines = ["t,x0,x1,x2,x3,u0"]
    for k, t in enumerate(ds.observed.times):
        row = [repr(float(t))] + [repr(float(v)) for v in ds.observed.x[k]]
        row.append(repr(float(ds.inputs[k])) if k < ds.inputs.size else "")
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    meta = {"sigma": ds.sigma, "seed": ds.seed, "h": ds.h, "x0": [float(v) for v in ds.x0],
            "n_steps": ds.n_steps}
    if reveal_truth and ds.true_params is not None:
        meta["true_params"] = [float(v) for v in ds.true_params]
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(path) -> SysIdDataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    rows = [line.split(",") for line in path.read_text().splitlines()[1:] if line]
    t = np.array([float(r[0]) for r in rows])
    x = np.array([[float(v) for v in r[1:5]] for r in rows])
    u = np.array([float(r[5]) for r in rows[:-1]])
    n = u.size
    obs = Trajectory(t, x, np.zeros((n, 4)), np.zeros((n, 4)), u.reshape(-1, 1), np.zeros(0))
    truth = meta.get("true_params")
    return SysIdDataset(obs, u, float(meta["sigma"]), int(meta["seed"]), float(meta["h"]),
                        np.array(meta["x0"], dtype=float), None if truth is None else np.array(truth))


# --------------------------------------------------------------------------
# transcribed problems


def _fixed_input_bounds(u, h, p_bounds=None):
    inf = np.inf
    n = u.size

    def at(t):
        k = min(max(int(round(t / h)), 0), n - 1)
        extra = {}
        if p_bounds is not None:
            extra = {"p_lb": [lo for lo, _ in p_bounds], "p_ub": [hi for _, hi in p_bounds]}
        return BoundsSpec.free(4, 4, 1, y_lb=[0.0, 0.0, 0.0, 0.0], y_ub=[inf, inf, inf, inf],
                               u_lb=[u[k]], u_ub=[u[k]], **extra)

    return at


def _contact_guess(x, p):
    tip = x[0] - POLE_LENGTH * x[1]
    return np.array([1e-2, 1e-2, max(WALL_OFFSET - tip, 1e-2), max(WALL_OFFSET + tip, 1e-2)])


def cartpole_feasibility_ocp(p, x0, u_seq, h: float) -> OCPDefinition:
    """No objective; inputs pinned to ``u_seq``.  The solution reproduces the implicit-Euler oracle."""
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float)
    N = u_seq.size
    x0 = np.asarray(x0, dtype=float)

    def guess(t):
        k = min(max(int(round(t / h)), 0), N - 1)
        return x0, np.zeros(4), _contact_guess(x0, p), np.array([u_seq[k]])

    return OCPDefinition(
        info=OCPInfo(4, 4, 1, 0, 2, N, FixedGrid.uniform(N * h, N)),
        bounds=_fixed_input_bounds(u_seq, h),
        initial_state=x0,
        dynamics=lambda xd, x, y, u, _p: cartpole_softwall_residual(xd, x, y, u, p),
        complementarity=list(CARTPOLE_PAIRS),
        initial_guess=guess,
        name="cartpole-softwall",
    )


GUESS_PRODUCT = 1e-6


def _finite_differences(ds: SysIdDataset) -> np.ndarray:
    """Backward differences; row ``k`` is the implicit-Euler derivative of element ``k`` (row 0 unused)."""
    x = ds.observed.x
    xd = np.zeros_like(x)
    xd[1:] = np.diff(x, axis=0) / ds.h
    return xd


def _wall_penetration(x):
    tip = x[:, 0] - POLE_LENGTH * x[:, 1]
    return np.maximum(tip - WALL_OFFSET, 0.0), np.maximum(-tip - WALL_OFFSET, 0.0)


def equation_error_params(ds: SysIdDataset, p_bounds: Sequence = DEFAULT_P_BOUNDS) -> np.ndarray:
    """Linear least-squares estimate from differenced data, clipped into the bounds.

    The cart row is linear in m_p.  Given m_p, the net wall force on the pole row is linear in
    (k_1, k_2) once contact is read off the observed tip position.
    """
    mc, ell, g = M_CART, POLE_LENGTH, GRAVITY
    x = ds.observed.x[1:]
    xd = _finite_differences(ds)[1:]
    u = np.asarray(ds.inputs, dtype=float)
    lo = np.array([b[0] for b in p_bounds], dtype=float)
    hi = np.array([b[1] for b in p_bounds], dtype=float)
    a = g * x[:, 1] / mc
    m_p = float((a @ (xd[:, 2] - u / mc)) / (a @ a)) if a @ a > 0 else np.sqrt(lo[0] * hi[0])
    m_p = float(np.clip(m_p, lo[0], hi[0]))
    r3 = xd[:, 3] - g * (mc + m_p) / (ell * mc) * x[:, 1] - u / (ell * mc)
    pen1, pen2 = _wall_penetration(x)
    k = np.sqrt(lo[1:] * hi[1:])
    cols = np.column_stack([pen1, -pen2])
    used = np.abs(cols).sum(axis=0) > 0
    if used.any():
        sol, *_ = np.linalg.lstsq(cols[:, used], ell * m_p * r3, rcond=None)
        k[used] = sol
    return np.clip(np.concatenate([[m_p], k]), lo, hi)


def build_sysid_ocp(ds: SysIdDataset, p_bounds: Sequence = DEFAULT_P_BOUNDS, p_init=None,
                    weight: Optional[float] = None) -> OCPDefinition:
    """Estimate ``(m_p, k_1, k_2)`` by matching the observed states with the inputs held fixed.

    Without ``p_init`` the parameters start from :func:`equation_error_params`; wall forces and
    gaps in the initial guess are made consistent with that start.
    """
    obs = ds.observed
    h, N = ds.h, ds.n_steps
    span = obs.x.max(axis=0) - obs.x.min(axis=0)
    # weight 1/h keeps the fit term comparable to the unit-scaled dynamics rows; at weight 1 the
    # multiplier scale is small enough that some seeds stall at spurious stationary points
    weight = 1.0 / h if weight is None else weight
    scale = weight / np.where(span > 0, span, 1.0) ** 2
    p_init = equation_error_params(ds, p_bounds) if p_init is None else np.asarray(p_init, dtype=float)
    times = obs.times
    x_obs = obs.x
    xd_obs = _finite_differences(ds)
    pen1, pen2 = _wall_penetration(x_obs)
    lam = np.column_stack([p_init[1] * pen1, p_init[2] * pen2])
    tip = x_obs[:, 0] - POLE_LENGTH * x_obs[:, 1]
    gaps = np.column_stack([lam[:, 0] / p_init[1] + WALL_OFFSET - tip,
                            lam[:, 1] / p_init[2] + WALL_OFFSET + tip])
    # complementary pairs start on a hyperbola lam * gap = GUESS_PRODUCT
    y_guess = np.hstack([lam, gaps])
    for j in range(2):
        lj, gj = y_guess[:, j], y_guess[:, 2 + j]
        contact = lj > gj
        root = np.sqrt(GUESS_PRODUCT)
        gj[contact] = GUESS_PRODUCT / np.maximum(lj[contact], root)
        lj[~contact] = GUESS_PRODUCT / np.maximum(gj[~contact], root)

    def signal(t):
        k = min(max(int(round(t / h)), 0), N)
        return x_obs[k]

    def cost(x, y, u, p, w):
        return sum(scale[j] * (x[j] - w[j]) * (x[j] - w[j]) for j in range(4))

    def guess(t):
        k = min(max(int(round(t / h)), 0), N)
        return x_obs[k], xd_obs[k], y_guess[k], np.array([ds.inputs[min(k, N - 1)]]), p_init

    return OCPDefinition(
        info=OCPInfo(4, 4, 1, 3, 2, N, FixedGrid.uniform(times[-1] - times[0], N)),
        bounds=_fixed_input_bounds(ds.inputs, h, p_bounds),
        initial_state=ds.x0.copy(),
        dynamics=cartpole_softwall_residual,
        running_cost=cost,
        complementarity=list(CARTPOLE_PAIRS),
        initial_guess=guess,
        initial_params=p_init.copy(),
        signal=signal,
        name="cartpole-sysid",
    )


# solver settings for the estimation problem: the equation-error start is close, so a small
# barrier and a tight bound push keep it
SYSID_SOLVER = dict(mu_init=1e-5, tol=1e-8, max_iter=500)
SYSID_PUSH = 1e-8
# the feasibility solve starts from a constant guess far from the trajectory
FEASIBILITY_SOLVER = dict(mu_init=10.0)


@dataclass
class Estimate:
    params: np.ndarray
    status: str
    iterations: int
    nrmse: float
    seconds: float
    fitted: Trajectory

    @property
    def ok(self) -> bool:
        return self.status == "Optimal"


def nrmse(observed: np.ndarray, fitted: np.ndarray) -> float:
    """Root-mean-square state error normalised by each channel's observed range, averaged over channels."""
    observed = np.asarray(observed, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    span = observed.max(axis=0) - observed.min(axis=0)
    rmse = np.sqrt(np.mean((observed - fitted) ** 2, axis=0))
    return float(np.mean(rmse / np.where(span > 0, span, 1.0)))


def estimate_parameters(ds: SysIdDataset, p_bounds: Sequence = DEFAULT_P_BOUNDS, mode=None,
                        options=None) -> Estimate:
    """Build and solve the estimation problem for one dataset."""
    import time

    from ..ipsolver import SolverOptions, solve
    from ..transcription import build_nlp, extract_trajectory, initial_guess_vector, make_mode

    defn = build_sysid_ocp(ds, p_bounds)
    nlp, layout = build_nlp(defn, mode if mode is not None else make_mode("per-pair-barrier"))
    opts = options if options is not None else SolverOptions(**SYSID_SOLVER)
    start = time.perf_counter()
    sol = solve(nlp, initial_guess_vector(defn, layout, push=SYSID_PUSH), opts)
    elapsed = time.perf_counter() - start
    fitted = extract_trajectory(layout, sol.z)
    return Estimate(fitted.params.copy(), sol.status.value, sol.iterations,
                    nrmse(ds.observed.x, fitted.x), elapsed, fitted)


def relative_errors(p_hat, p_true) -> np.ndarray:
    p_hat = np.asarray(p_hat, dtype=float)
    p_true = np.asarray(p_true, dtype=float)
    return np.abs(p_hat - p_true) / np.abs(p_true)


def contact_steps(traj: Trajectory, tol: float = 1e-9) -> np.ndarray:
    """Indices of steps with a nonzero wall force."""
    return np.flatnonzero(np.any(traj.y[:, :2] > tol, axis=1))
