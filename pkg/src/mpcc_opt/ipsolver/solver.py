"""Primal-dual interior-point method for transcribed programs.

Relaxable rows ``c_R(z) <= delta`` become ``c_R(z) + s - delta = 0`` with
``s >= 0``, so the solver sees

    min f(z)  s.t.  C(z, s) = 0,  lb <= z <= ub,  s >= 0

Variables with ``lb == ub`` are held at their value and drop out of the
Newton system.  Steps come from the symmetrized primal-dual system with
inertia correction, and are globalized by backtracking on an l1 merit
function.  In barrier-linked relaxation modes ``delta`` follows ``mu``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from ..autodiff import EvaluationError
from ..transcription.nlp import NLPProblem
from .kkt import KKTSystem, SingularKKTError
from .options import SolverOptions

EPS = np.finfo(float).eps


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible-heuristic"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


class LineSearchFailure(RuntimeError):
    pass


class SolverEvaluationError(RuntimeError):
    """An evaluator failed at a point the solver had to accept."""


@dataclass
class Iterate:
    z: np.ndarray
    s: np.ndarray  # slacks of the relaxable rows
    lam: np.ndarray
    zl: np.ndarray  # lower-bound duals (0 where unbounded)
    zu: np.ndarray
    vs: np.ndarray  # slack duals
    mu: float
    delta: float

    def copy(self) -> "Iterate":
        return Iterate(self.z.copy(), self.s.copy(), self.lam.copy(), self.zl.copy(),
                       self.zu.copy(), self.vs.copy(), self.mu, self.delta)


@dataclass
class Direction:
    dz: np.ndarray
    ds: np.ndarray
    dlam: np.ndarray
    dzl: np.ndarray
    dzu: np.ndarray
    dvs: np.ndarray
    delta_w: float
    residual: float
    r1: Optional[np.ndarray] = None  # dual block of the right-hand side, kept for corrections


@dataclass
class Solution:
    status: Status
    iterate: Iterate
    objective: float
    eq_violation: float
    compl_residual: float
    iterations: int
    kkt_error: float
    log: List[dict] = field(default_factory=list)
    message: str = ""

    @property
    def z(self) -> np.ndarray:
        return self.iterate.z

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# --------------------------------------------------------------------------
# scalar rules


def update_barrier(mu: float, opts: SolverOptions) -> float:
    return max(opts.tol / 10.0, min(opts.kappa_mu * mu, mu ** opts.theta_mu))


def fraction_to_boundary(value, step, lower, upper, tau: float) -> float:
    """Largest alpha in (0, 1] keeping ``value + alpha*step`` a fraction (1-tau) from the bounds."""
    value = np.asarray(value, dtype=float)
    step = np.asarray(step, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), value.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), value.shape)
    alpha = 1.0
    m = (step < 0) & np.isfinite(lower)
    if m.any():
        alpha = min(alpha, float(np.min(tau * (value[m] - lower[m]) / -step[m])))
    m = (step > 0) & np.isfinite(upper)
    if m.any():
        alpha = min(alpha, float(np.min(tau * (upper[m] - value[m]) / step[m])))
    return alpha


# --------------------------------------------------------------------------
# problem wrapper


class _Work:
    """Index bookkeeping and evaluations on the slack-extended variables."""

    def __init__(self, nlp: NLPProblem, opts: SolverOptions):
        self.nlp, self.opts = nlp, opts
        self.n, self.m = nlp.n, nlp.m
        self.R = nlp.relaxable_rows
        self.mR = self.R.size
        self.nt = self.n + self.mR
        self.lb = np.concatenate([nlp.lb, np.zeros(self.mR)])
        self.ub = np.concatenate([nlp.ub, np.full(self.mR, np.inf)])
        self.fixed = self.lb == self.ub
        self.free = ~self.fixed
        self.hl = np.isfinite(self.lb) & self.free
        self.hu = np.isfinite(self.ub) & self.free
        self._kkt = None

    # evaluations --------------------------------------------------------
    def constraints(self, z, s, delta):
        c = self.nlp.constraints(z).copy()
        c[self.R] += s - delta
        return c

    def jacobian(self, z) -> sp.csr_matrix:
        return self.nlp.jacobian(z)

    def jt_lam(self, J, lam):
        return np.concatenate([J.T @ lam, lam[self.R]])

    def grad_lagrangian(self, g, J, it: Iterate):
        gl = np.concatenate([g, np.zeros(self.mR)]) + self.jt_lam(J, it.lam)
        gl -= np.concatenate([it.zl, it.vs])
        gl += np.concatenate([it.zu, np.zeros(self.mR)])
        gl[self.fixed] = 0.0
        return gl

    def residual(self, it: Iterate, mu: float, g=None, c=None, J=None) -> float:
        if g is None:
            g, J = self.nlp.gradient(it.z), self.jacobian(it.z)
            c = self.constraints(it.z, it.s, it.delta)
        x = np.concatenate([it.z, it.s])
        zl = np.concatenate([it.zl, it.vs])
        zu = np.concatenate([it.zu, np.zeros(self.mR)])
        stat = np.abs(self.grad_lagrangian(g, J, it)).max(initial=0.0)
        feas = np.abs(c).max(initial=0.0)
        cl = np.abs((x - self.lb)[self.hl] * zl[self.hl] - mu).max(initial=0.0)
        cu = np.abs((self.ub - x)[self.hu] * zu[self.hu] - mu).max(initial=0.0)
        return float(max(stat, feas, cl, cu))

    def barrier_value(self, x, f, mu):
        v = f
        if self.hl.any():
            v -= mu * np.sum(np.log(x[self.hl] - self.lb[self.hl]))
        if self.hu.any():
            v -= mu * np.sum(np.log(self.ub[self.hu] - x[self.hu]))
        return v

    # KKT matrix -----------------------------------------------------------
    def _setup_kkt(self):
        nlp, n, nt, m = self.nlp, self.n, self.nt, self.m
        fixed = self.fixed
        hr, hc = nlp.hess_rows, nlp.hess_cols
        self._hkeep = ~(fixed[hr] | fixed[hc])
        hr, hc = hr[self._hkeep], hc[self._hkeep]
        off = hr != hc
        self._hoff = off
        jr, jc = nlp.jac_rows, nlp.jac_cols
        self._jkeep = ~fixed[jc]
        jr, jc = jr[self._jkeep], jc[self._jkeep]
        diag = np.arange(nt)
        srow = nt + self.R
        scol = n + np.arange(self.mR)
        rows = np.concatenate([hr, hc[off], diag, nt + jr, jc, srow, scol, nt + np.arange(m)])
        cols = np.concatenate([hc, hr[off], diag, jc, nt + jr, scol, srow, nt + np.arange(m)])
        stage = np.concatenate([nlp.var_stage, nlp.row_stage[self.R], nlp.row_stage])
        dense = self.opts.linear_solver == "dense"
        self._kkt = KKTSystem(stage, rows, cols, dense=dense)
        self._n_ones = 2 * self.mR

    def kkt_values(self, hv, sigma, jv, delta_w, delta_c):
        hv = hv[self._hkeep]
        d = sigma + delta_w
        d[self.fixed] = 1.0
        jv = jv[self._jkeep]
        return np.concatenate([hv, hv[self._hoff], d, jv, jv, np.ones(self._n_ones),
                               np.full(self.m, -delta_c)])

    @property
    def kkt(self) -> KKTSystem:
        if self._kkt is None:
            self._setup_kkt()
        return self._kkt


# --------------------------------------------------------------------------
# public pieces


def kkt_residual(nlp: NLPProblem, it: Iterate, mu: float) -> float:
    """Unscaled optimality error E(mu) of the barrier problem."""
    return _Work(nlp, SolverOptions()).residual(it, mu)


def _sigma(w: _Work, x, zl, zu):
    sig = np.zeros(w.nt)
    sig[w.hl] += zl[w.hl] / (x[w.hl] - w.lb[w.hl])
    sig[w.hu] += zu[w.hu] / (w.ub[w.hu] - x[w.hu])
    return sig


def _barrier_grad(w: _Work, g, x, mu):
    gp = np.concatenate([g, np.zeros(w.mR)])
    gp[w.hl] -= mu / (x[w.hl] - w.lb[w.hl])
    gp[w.hu] += mu / (w.ub[w.hu] - x[w.hu])
    return gp


def _direction(w: _Work, it: Iterate, mu: float, g, c, J, delta_w_last: float, delta_w_floor: float = 0.0):
    opts = w.opts
    x = np.concatenate([it.z, it.s])
    zl = np.concatenate([it.zl, it.vs])
    zu = np.concatenate([it.zu, np.zeros(w.mR)])
    sig = _sigma(w, x, zl, zu)
    gp = _barrier_grad(w, g, x, mu)
    r1 = -(gp + w.jt_lam(J, it.lam))
    r1[w.fixed] = 0.0
    rhs = np.concatenate([r1, -c])
    hv = w.nlp.hessian_values(it.z, 1.0, it.lam)
    jv = J.data  # csr data follows the structural pattern order
    kkt = w.kkt
    want = (w.nt, w.m, 0)
    dw = delta_w_floor
    dc = 0.0  # constraint regularization only once the matrix looks singular
    corrections = 0
    while True:
        inert = kkt.factor(w.kkt_values(hv, sig.copy(), jv, dw, dc))
        if (inert.positive, inert.negative, inert.zero) == want:
            break
        corrections += 1
        if corrections > opts.max_corrections:
            raise SingularKKTError(f"KKT matrix still has wrong inertia after {opts.max_corrections} corrections")
        if dc == 0.0 and w.m > 0 and mu > 0.0 and (inert.zero > 0 or corrections > 3):
            dc = opts.delta_c * mu ** 0.25
            if inert.zero > 0:
                continue  # dc only ever set once, so this cannot loop
        if dw == 0.0:
            dw = opts.delta_w_init if delta_w_last == 0.0 else max(1e-20, delta_w_last / 3.0)
        else:
            dw *= opts.delta_w_growth
        if dw > opts.delta_w_max:
            raise LineSearchFailure("inertia correction exceeded its limit")
    sol, rel = kkt.solve_refined(rhs, tol=opts.refine_tol)
    d = _unpack(w, it, mu, sol, dw, rel)
    d.r1 = r1
    return d


def _unpack(w: _Work, it: Iterate, mu: float, sol, dw: float, rel: float) -> Direction:
    x = np.concatenate([it.z, it.s])
    zl = np.concatenate([it.zl, it.vs])
    zu = np.concatenate([it.zu, np.zeros(w.mR)])
    dx, dlam = sol[: w.nt].copy(), sol[w.nt :]
    dx[w.fixed] = 0.0
    dzl = np.zeros(w.nt)
    dzu = np.zeros(w.nt)
    gl = x[w.hl] - w.lb[w.hl]
    gu = w.ub[w.hu] - x[w.hu]
    dzl[w.hl] = mu / gl - zl[w.hl] - zl[w.hl] / gl * dx[w.hl]
    dzu[w.hu] = mu / gu - zu[w.hu] + zu[w.hu] / gu * dx[w.hu]
    n = w.n
    return Direction(dx[:n], dx[n:], dlam, dzl[:n], dzu[:n], dzl[n:], dw, rel)


def newton_direction(nlp: NLPProblem, it: Iterate, mu: float, opts: Optional[SolverOptions] = None) -> Direction:
    w = _Work(nlp, opts or SolverOptions())
    g, J = nlp.gradient(it.z), w.jacobian(it.z)
    c = w.constraints(it.z, it.s, it.delta)
    return _direction(w, it, mu, g, c, J, 0.0)


def _trial(w: _Work, x, mu, delta, nu):
    z, s = x[: w.n], x[w.n :]
    f = w.nlp.objective(z)
    c = w.constraints(z, s, delta)
    return w.barrier_value(x, f, mu) + nu @ np.abs(c), f, c


def _step_bounds(w: _Work, it: Iterate, d: Direction, tau: float):
    x = np.concatenate([it.z, it.s])
    dx = np.concatenate([d.dz, d.ds])
    zl = np.concatenate([it.zl, it.vs])
    dzl = np.concatenate([d.dzl, d.dvs])
    a_max = fraction_to_boundary(x[w.free], dx[w.free], np.where(w.hl, w.lb, -np.inf)[w.free],
                                 np.where(w.hu, w.ub, np.inf)[w.free], tau)
    a_dual = min(
        fraction_to_boundary(zl[w.hl], dzl[w.hl], 0.0, np.inf, tau),
        fraction_to_boundary(it.zu[w.hu[: w.n]], d.dzu[w.hu[: w.n]], 0.0, np.inf, tau),
    )
    return a_max, a_dual


def _second_order(w: _Work, it: Iterate, d: Direction, mu, tau, alpha, c, c_trial, x, merit0, D, nu):
    """Corrections of the rejected full step against constraint curvature.

    Re-solves with the current factorization and right-hand side ``alpha c + c(x + alpha dx)``.
    Returns ``(direction, alpha, alpha_dual, merit)`` or None.
    """
    opts = w.opts
    c_soc = alpha * c
    theta_prev = np.abs(c).sum()
    for _ in range(opts.max_soc):
        c_soc = c_soc + c_trial
        sol, rel = w.kkt.solve_refined(np.concatenate([d.r1, -c_soc]), tol=opts.refine_tol)
        ds = _unpack(w, it, mu, sol, d.delta_w, rel)
        ds.dlam = d.dlam  # the corrected right-hand side says nothing about the multipliers
        a_soc, a_dual = _step_bounds(w, it, ds, tau)
        dx = np.concatenate([ds.dz, ds.ds])
        try:
            merit, _, c_trial = _trial(w, x + a_soc * dx, mu, it.delta, nu)
        except EvaluationError:
            return None
        if np.isfinite(merit) and merit <= merit0 + opts.armijo * alpha * D:
            return ds, a_soc, a_dual, merit
        theta = np.abs(c_trial).sum()
        if not theta <= 0.99 * theta_prev:
            return None
        theta_prev = theta
        c_soc = a_soc * c_soc
    return None


def line_search(w: _Work, it: Iterate, d: Direction, mu: float, g, c, J, nu: float):
    """Backtracking on the l1 merit.

    Returns ``(alpha_primal, alpha_dual, nu, merit, direction, cuts)``; the direction differs
    from ``d`` when a second-order correction was accepted, ``cuts`` counts the halvings.
    """
    opts = w.opts
    tau = max(opts.tau_min, 1.0 - mu)
    x = np.concatenate([it.z, it.s])
    dx = np.concatenate([d.dz, d.ds])
    a_max, a_dual = _step_bounds(w, it, d, tau)
    gp = _barrier_grad(w, g, x, mu)
    th = np.abs(c).sum()
    c_lin = c + J @ d.dz
    c_lin[w.R] += d.ds
    th_lin = np.abs(c_lin).sum()
    slope = float(gp @ dx)
    lam_plus = np.abs(it.lam)
    # exact-penalty condition: keep every weight above its multiplier estimate
    nu = np.maximum(nu, 1.1 * lam_plus)
    D = slope + nu @ (np.abs(c_lin) - np.abs(c))
    if D >= 0:
        nu = np.maximum(nu, opts.penalty_growth * lam_plus + 1.0)
        D = slope + nu @ (np.abs(c_lin) - np.abs(c))
        red = nu @ (np.abs(c) - np.abs(c_lin))
        if D >= 0 and red > 0:
            nu = nu * max(1.0, 1.1 * slope / (0.9 * red))
            D = slope + nu @ (np.abs(c_lin) - np.abs(c))
    f0 = w.nlp.objective(it.z)
    merit0 = w.barrier_value(x, f0, mu) + nu @ np.abs(c)
    if np.max(np.abs(dx) / (1.0 + np.abs(x)), initial=0.0) < 10 * EPS:
        return a_max, a_dual, nu, merit0, d, 0
    D = min(D, 0.0)
    alpha = a_max
    noise = 1e-14 * max(1.0, abs(merit0))
    cuts = 0
    while True:
        c_trial = None
        try:
            merit, _, c_trial = _trial(w, x + alpha * dx, mu, it.delta, nu)
            ok = np.isfinite(merit) and merit <= merit0 + opts.armijo * alpha * D + noise
        except EvaluationError:
            ok = False
        if ok:
            return alpha, a_dual, nu, merit, d, cuts
        if (cuts == 0 and c_trial is not None and d.r1 is not None and opts.max_soc > 0
                and np.abs(c_trial).sum() >= th):
            soc = _second_order(w, it, d, mu, tau, alpha, c, c_trial, x, merit0 + noise, D, nu)
            if soc is not None:
                ds, a_soc, a_dual_soc, merit = soc
                return a_soc, a_dual_soc, nu, merit, ds, 0
        cuts += 1
        alpha *= opts.backtrack
        if alpha < opts.min_step:
            raise LineSearchFailure(f"step size fell below {opts.min_step:g} (merit {merit0:.6g}, slope {D:.3g})")


def _initial_iterate(w: _Work, z0, mu: float, delta: float) -> Iterate:
    nlp = w.nlp
    z = np.array(z0, dtype=float, copy=True)
    if z.size != w.n:
        raise ValueError(f"starting point has length {z.size}, expected {w.n}")
    lb, ub = nlp.lb, nlp.ub
    fixed = w.fixed[: w.n]
    z[fixed] = lb[fixed]
    # only repair components that are not strictly interior
    gap = ub - lb
    m = 1e-2 * np.maximum(1.0, np.abs(np.where(np.isfinite(lb), lb, 0.0)))
    m = np.where(np.isfinite(gap), np.minimum(m, 0.5 * gap), m)
    bad = ~fixed & np.isfinite(lb) & (z <= lb)
    z[bad] = (lb + m)[bad]
    m = 1e-2 * np.maximum(1.0, np.abs(np.where(np.isfinite(ub), ub, 0.0)))
    m = np.where(np.isfinite(gap), np.minimum(m, 0.5 * gap), m)
    bad = ~fixed & np.isfinite(ub) & (z >= ub)
    z[bad] = (ub - m)[bad]
    try:
        c = nlp.constraints(z)
    except EvaluationError as exc:
        raise SolverEvaluationError(f"iteration 0: {exc}") from exc
    s = np.maximum(delta - c[w.R], w.opts.slack_init)
    zl = np.zeros(w.n)
    zu = np.zeros(w.n)
    hl, hu = w.hl[: w.n], w.hu[: w.n]
    zl[hl] = mu / (z[hl] - lb[hl])
    zu[hu] = mu / (ub[hu] - z[hu])
    return Iterate(z, s, np.zeros(w.m), zl, zu, mu / s, mu, delta)


def _safeguard(w: _Work, it: Iterate, mu: float):
    k = w.opts.kappa_sigma
    x = np.concatenate([it.z, it.s])
    zl = np.concatenate([it.zl, it.vs])
    gl = x[w.hl] - w.lb[w.hl]
    zl[w.hl] = np.clip(zl[w.hl], mu / (k * gl), k * mu / gl)
    it.zl, it.vs = zl[: w.n], zl[w.n :]
    hu = w.hu[: w.n]
    gu = w.ub[: w.n][hu] - it.z[hu]
    it.zu[hu] = np.clip(it.zu[hu], mu / (k * gu), k * mu / gu)


def _violation(w: _Work, z, delta) -> float:
    c = w.nlp.constraints(z)
    eq = np.abs(np.delete(c, w.R)).max(initial=0.0)
    rel = np.maximum(c[w.R] - delta, 0.0).max(initial=0.0)
    return float(max(eq, rel))


def solve(nlp: NLPProblem, z0, opts: Optional[SolverOptions] = None) -> Solution:
    opts = opts or SolverOptions()
    if opts.mode is not None and nlp.mode is None:
        nlp.mode = opts.mode
    w = _Work(nlp, opts)
    mu = opts.mu_init
    linked = nlp.barrier_linked
    if not linked and nlp.relaxable_rows.size and nlp.delta > 0:
        # a barrier far above a fixed delta drives the relaxed-row multipliers towards mu/delta
        mu = min(mu, max(nlp.delta, opts.tol))
    if linked:
        nlp.delta = mu
    it = _initial_iterate(w, z0, mu, nlp.delta)
    nu = np.ones(nlp.m)
    delta_w_last = 0.0
    dw_floor = 0.0  # damping after short steps, a crude trust region
    alpha_p = alpha_d = 0.0
    delta_w = 0.0
    log: List[dict] = []
    status, message = Status.MAX_ITER, ""
    stalled = 0
    k = 0
    while True:
        try:
            f = nlp.objective(it.z)
            g = nlp.gradient(it.z)
            J = w.jacobian(it.z)
        except EvaluationError as exc:
            raise SolverEvaluationError(f"iteration {k}: {exc}") from exc
        c = w.constraints(it.z, it.s, it.delta)
        e_mu = w.residual(it, mu, g, c, J)
        while e_mu <= opts.kappa_eps * mu and mu > opts.tol / 10.0:
            mu_new = update_barrier(mu, opts)
            if not mu_new < mu:
                break
            mu = mu_new
            if linked:
                nlp.delta = mu
                it.delta = mu
                c = w.constraints(it.z, it.s, it.delta)
            e_mu = w.residual(it, mu, g, c, J)
        it.mu = mu
        e_0 = w.residual(it, 0.0, g, c, J)
        log.append({
            "iter": k,
            "mu": mu,
            "delta": it.delta,
            "objective": f,
            "alpha_primal": alpha_p,
            "alpha_dual": alpha_d,
            "eq_violation": _violation(w, it.z, it.delta),
            "compl_residual": nlp.complementarity_residual(it.z),
            "kkt_error": max(e_0, e_mu),
            "delta_w": delta_w,
            "nu": float(nu.max(initial=0.0)),
        })
        if max(e_0, e_mu) <= opts.tol:
            status = Status.OPTIMAL
            break
        if k >= opts.max_iter:
            status, message = Status.MAX_ITER, f"reached {opts.max_iter} iterations"
            break
        try:
            d = _direction(w, it, mu, g, c, J, delta_w_last, dw_floor)
            delta_w = d.delta_w
            if delta_w > 0:
                delta_w_last = delta_w
            alpha_p, alpha_d, nu, _, d, cuts = line_search(w, it, d, mu, g, c, J, nu)
            if cuts >= opts.damping_cuts:
                dw_floor = max(opts.delta_w_init, opts.delta_w_growth * dw_floor)
            elif cuts == 0:
                dw_floor = dw_floor / opts.delta_w_growth if dw_floor > 1e-12 else 0.0
        except (LineSearchFailure, SingularKKTError) as exc:
            status, message = Status.LINE_SEARCH_FAILURE, str(exc)
            break
        it.z = it.z + alpha_p * d.dz
        it.s = it.s + alpha_p * d.ds
        it.lam = it.lam + alpha_p * d.dlam
        it.zl = it.zl + alpha_d * d.dzl
        it.zu = it.zu + alpha_d * d.dzu
        it.vs = it.vs + alpha_d * d.dvs
        _safeguard(w, it, mu)
        viol = np.abs(c).max(initial=0.0)
        stalled = stalled + 1 if (alpha_p < 1e-10 and viol > np.sqrt(opts.tol)) else 0
        if stalled >= 10:
            status, message = Status.INFEASIBLE, "no progress on constraint violation"
            break
        k += 1
    z = it.z
    return Solution(
        status=status,
        iterate=it,
        objective=float(nlp.objective(z)),
        eq_violation=_violation(w, z, it.delta),
        compl_residual=nlp.complementarity_residual(z),
        iterations=k,
        kkt_error=log[-1]["kkt_error"],
        log=log,
        message=message,
    )
