"""Implicit-Euler transcription of :class:`OCPDefinition` problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import record
from ..model import (
    FixedGrid,
    FreeDuration,
    OCPDefinition,
    Trajectory,
    validate_definition,
)
from . import relaxation
from .layout import PhaseLayout, VariableLayout
from .nlp import EQUALITY, RELAXABLE, Block, NLPProblem

INTERIOR_MARGIN = 1e-2


class StructuralError(ValueError):
    """The definition violates the problem contract."""


class UnsupportedFeatureError(NotImplementedError):
    pass


@dataclass
class Phase:
    """One mode of a sequence; ``duration`` overrides the horizon with free bounds."""

    definition: OCPDefinition
    n_e: Optional[int] = None
    duration: Optional[Tuple[float, float]] = None


@dataclass
class PhaseSequence:
    """Ordered phases.  ``carry[k]`` lists ``(from_idx, to_idx)`` state pairs
    linking phase k's final state to phase k+1's initial state; ``None``
    carries every component (requires equal n_x)."""

    phases: List[Phase]
    carry: Optional[List[Sequence[Tuple[int, int]]]] = None


@dataclass
class _Spec:
    defn: OCPDefinition
    n_e: int
    free: bool
    t_bounds: Tuple[float, float]
    widths: Optional[np.ndarray]
    minimum_time: bool


def _check(defn: OCPDefinition):
    hooks = defn.object_hooks or {}
    if defn.info.n_objects > 0 or hooks:
        raise UnsupportedFeatureError("polytope objects (collision avoidance) are not supported")
    report = validate_definition(defn)
    if not report.ok:
        raise StructuralError("; ".join(report))


def _spec_of(defn: OCPDefinition, n_e=None, duration=None, minimum_time=None) -> _Spec:
    info = defn.info
    n_e = info.n_e if n_e is None else int(n_e)
    hz = info.horizon
    if duration is not None:
        hz = FreeDuration(*duration)
    mt = defn.minimum_time if minimum_time is None else minimum_time
    if isinstance(hz, FreeDuration):
        if not hz.lower > 0:
            raise ValueError("free duration lower bound must be positive")
        return _Spec(defn, n_e, True, (hz.lower, hz.upper), None, mt)
    widths = np.asarray(hz.widths, dtype=float)
    if widths.size != n_e:
        widths = np.full(n_e, hz.duration / n_e)
    return _Spec(defn, n_e, False, (np.nan, np.nan), widths, False)


def _nominal_widths(spec: _Spec) -> np.ndarray:
    if spec.free:
        T = 0.5 * (spec.t_bounds[0] + spec.t_bounds[1])
        return np.full(spec.n_e, T / spec.n_e)
    return spec.widths


def _record_phase_tapes(defn: OCPDefinition, n_w: int):
    info = defn.info
    nx, ny, nu, npar = info.n_x, info.n_y, info.n_u, info.n_p
    nm = defn.name or "ocp"

    def dyn(v):
        o = np.cumsum([0, nx, nx, ny, nu, npar])
        return defn.dynamics(v[o[0]:o[1]], v[o[1]:o[2]], v[o[2]:o[3]], v[o[3]:o[4]], v[o[4]:o[5]])

    def cont(v):
        return v[0:nx] - v[nx : 2 * nx] - v[3 * nx] * v[2 * nx : 3 * nx]

    tapes = {
        "dyn": record(dyn, 2 * nx + ny + nu + npar, f"{nm}/dynamics"),
        "cont": record(cont, 3 * nx + 1, f"{nm}/continuity"),
    }
    if defn.running_cost is not None:

        def cost(v):
            o = np.cumsum([0, nx, ny, nu, npar, n_w])
            args = [v[o[0]:o[1]], v[o[1]:o[2]], v[o[2]:o[3]], v[o[3]:o[4]]]
            if defn.signal is not None:
                args.append(v[o[4]:o[5]])
            return v[o[5]] * defn.running_cost(*args)

        tapes["cost"] = record(cost, nx + ny + nu + npar + n_w + 1, f"{nm}/running_cost")
    if defn.mayer_cost is not None:
        tapes["mayer"] = record(lambda v: defn.mayer_cost(v[:nx], v[nx:]), nx + npar, f"{nm}/mayer")
    pairs = list(defn.complementarity)
    if pairs:
        n_in = ny + 2 * len(pairs)
        tapes["pairs"] = record(relaxation.product_function(pairs, ny, False), n_in, f"{nm}/pairs")
        tapes["pairs_sum"] = record(relaxation.product_function(pairs, ny, True), n_in, f"{nm}/pairs_sum")
    return tapes


class _Assembler:
    def __init__(self, n_z: int):
        self.lb = np.full(n_z, -np.inf)
        self.ub = np.full(n_z, np.inf)
        self.var_stage = np.full(n_z, -1, dtype=np.int64)
        self.row_kind: List[int] = []
        self.row_stage: List[int] = []

    def rows(self, count: int, kind: int, stage: int) -> np.ndarray:
        start = len(self.row_kind)
        self.row_kind.extend([kind] * count)
        self.row_stage.extend([stage] * count)
        return np.arange(start, start + count, dtype=np.int64)


def _assemble(specs: List[_Spec], carry, mode) -> Tuple[NLPProblem, VariableLayout]:
    n_p = specs[0].defn.info.n_p
    if any(s.defn.info.n_p != n_p for s in specs):
        raise StructuralError("all phases must share the parameter vector")
    if any(s.defn.info.n_c > 0 for s in specs):
        if mode is None:
            mode = relaxation.PerPairFixed()
        relaxation.check_mode(mode)

    # variable offsets
    phases: List[PhaseLayout] = []
    pos, stage = 0, 0
    for q, s in enumerate(specs):
        info = s.defn.info
        x0_start = -1
        if q > 0:
            x0_start, pos = pos, pos + info.n_x
        ph = PhaseLayout(info.n_x, info.n_y, info.n_u, s.n_e, pos, stage, x0_start)
        ph.widths = None if s.free else s.widths
        phases.append(ph)
        pos = ph.end
        stage += s.n_e
    p_start, pos = pos, pos + n_p
    for ph, s in zip(phases, specs):
        if s.free:
            ph.t_index, pos = pos, pos + 1
    n_z = pos
    layout = VariableLayout(phases, p_start, n_p, n_z)
    layout.definitions = [s.defn for s in specs]
    asm = _Assembler(n_z)
    p_idx = layout.p_idx

    b0 = specs[0].defn.bounds_at(specs[0].defn.info.t0)
    if n_p:
        asm.lb[p_idx], asm.ub[p_idx] = b0.p_lb, b0.p_ub

    obj_blocks: List[Block] = []
    con_blocks: List[Block] = []
    compl_blocks: List[Block] = []
    t_start = specs[0].defn.info.t0
    prev_last_x = None

    for q, (s, ph) in enumerate(zip(specs, phases)):
        defn, info = s.defn, s.defn.info
        nx, ny, nu, n_e = info.n_x, info.n_y, info.n_u, s.n_e
        h_nom = _nominal_widths(s)
        ph.t0 = t_start
        times = t_start + np.concatenate([[0.0], np.cumsum(h_nom)])
        t_start = times[-1]
        bnds = [defn.bounds_at(t) for t in times]
        xi, xdi, yi, ui = ph.x_idx, ph.xdot_idx, ph.y_idx, ph.u_idx
        stages = ph.stage0 + np.arange(n_e)

        if s.free:
            asm.lb[ph.t_index], asm.ub[ph.t_index] = s.t_bounds

        # bounds: x, xdot, y at t_i; u_{i-1} at t_{i-1}
        for e in range(n_e):
            bi, bp = bnds[e + 1], bnds[e]
            x_lb, x_ub = bi.x_lb, bi.x_ub
            if e == n_e - 1 and bi.x_final_lb is not None:
                x_lb = np.maximum(x_lb, bi.x_final_lb)
            if e == n_e - 1 and bi.x_final_ub is not None:
                x_ub = np.minimum(x_ub, bi.x_final_ub)
            for idx, lo, hi in ((xi[e], x_lb, x_ub), (xdi[e], bi.xdot_lb, bi.xdot_ub),
                                (yi[e], bi.y_lb, bi.y_ub), (ui[e], bp.u_lb, bp.u_ub)):
                asm.lb[idx], asm.ub[idx] = lo, hi
            asm.var_stage[np.concatenate([xi[e], xdi[e], yi[e], ui[e]])] = stages[e]

        # initial state of later phases: carried components free, others pinned
        boundary_rows = np.zeros(0, np.int64)
        if q > 0:
            pairs = carry[q - 1]
            x0 = ph.x0_start + np.arange(nx)
            asm.var_stage[x0] = ph.stage0
            x_hat = np.asarray(defn.initial_state, dtype=float)
            asm.lb[x0], asm.ub[x0] = x_hat, x_hat
            to = np.array([t for _, t in pairs], dtype=np.int64)
            frm = np.array([f for f, _ in pairs], dtype=np.int64)
            asm.lb[x0[to]], asm.ub[x0[to]] = bnds[0].x_lb[to], bnds[0].x_ub[to]
            nc = len(pairs)
            if nc:
                tape = record(lambda v, k=nc: v[k:] - v[:k], 2 * nc, f"boundary{q}")
                boundary_rows = asm.rows(nc, EQUALITY, ph.stage0)
                con_blocks.append(Block(tape, np.concatenate([prev_last_x[frm], x0[to]])[None, :],
                                        1.0, 0.0, boundary_rows[None, :]))
        layout.boundary_rows.append(boundary_rows)

        n_w = 0
        w_vals = np.zeros((n_e, 0))
        if defn.signal is not None:
            w_vals = np.array([np.atleast_1d(defn.signal(t)) for t in times[1:]], dtype=float)
            n_w = w_vals.shape[1]
        tapes = _record_phase_tapes(defn, n_w)

        # rows, element by element
        n_dyn = tapes["dyn"].n_out
        pairs = list(defn.complementarity)
        n_c = len(pairs)
        penalty = n_c > 0 and relaxation.is_penalty(mode)
        n_rel = 0 if (n_c == 0 or penalty) else (1 if relaxation.is_aggregated(mode) else n_c)
        dyn_rows = np.empty((n_e, n_dyn), np.int64)
        cont_rows = np.empty((n_e, nx), np.int64)
        rel_rows = np.empty((n_e, n_rel), np.int64)
        for e in range(n_e):
            dyn_rows[e] = asm.rows(n_dyn, EQUALITY, stages[e])
            cont_rows[e] = asm.rows(nx, EQUALITY, stages[e])
            rel_rows[e] = asm.rows(n_rel, RELAXABLE, stages[e])
        layout.dyn_rows.append(dyn_rows)
        layout.cont_rows.append(cont_rows)
        layout.compl_rows.append(rel_rows)

        p_rep = np.broadcast_to(p_idx, (n_e, n_p))
        con_blocks.append(Block(tapes["dyn"], np.hstack([xdi, xi, yi, ui, p_rep]), 1.0, 0.0, dyn_rows))

        # continuity: x_i - x_{i-1} - h_i xdot_i with x_0 = x_hat or the phase's x_0 variables
        x_prev = np.vstack([np.full((1, nx), -1, np.int64), xi[:-1]])
        off_prev = np.zeros((n_e, nx))
        if q == 0:
            off_prev[0] = np.asarray(defn.initial_state, dtype=float)
        else:
            x_prev[0] = ph.x0_start + np.arange(nx)
        if s.free:
            h_idx = np.full((n_e, 1), ph.t_index, np.int64)
            h_scale, h_off = np.full((n_e, 1), 1.0 / n_e), np.zeros((n_e, 1))
        else:
            h_idx = np.full((n_e, 1), -1, np.int64)
            h_scale, h_off = np.ones((n_e, 1)), s.widths[:, None]
        ones = np.ones((n_e, nx))
        con_blocks.append(Block(
            tapes["cont"],
            np.hstack([xi, x_prev, xdi, h_idx]),
            np.hstack([ones, ones, ones, h_scale]),
            np.hstack([0 * ones, off_prev, 0 * ones, h_off]),
            cont_rows,
        ))

        if "cost" in tapes:
            const_w = np.full((n_e, n_w), -1, np.int64)
            n_in = nx + ny + nu + n_p
            idx = np.hstack([xi, yi, ui, p_rep, const_w, h_idx])
            scale = np.hstack([np.ones((n_e, n_in + n_w)), h_scale])
            off = np.hstack([np.zeros((n_e, n_in)), w_vals, h_off])
            obj_blocks.append(Block(tapes["cost"], idx, scale, off))
        if "mayer" in tapes:
            obj_blocks.append(Block(tapes["mayer"], np.concatenate([xi[-1], p_idx])[None, :], 1.0, 0.0))
        if s.minimum_time and s.free:
            obj_blocks.append(Block(record(lambda v: v[0], 1, "duration"), [[ph.t_index]], 1.0, 0.0))

        if n_c:
            nu_a = np.empty((n_e, n_c))
            nu_b = np.empty((n_e, n_c))
            for e in range(n_e):
                nu_a[e], nu_b[e] = relaxation.selected_bounds(pairs, bnds[e + 1])
            idx = np.hstack([yi, np.full((n_e, 2 * n_c), -1, np.int64)])
            off = np.hstack([np.zeros((n_e, ny)), nu_a, nu_b])
            compl_blocks.append(Block(tapes["pairs"], idx, 1.0, off))
            if penalty:
                obj_blocks.append(Block(tapes["pairs_sum"], idx, 1.0, off, weight=mode.rho))
            elif relaxation.is_aggregated(mode):
                con_blocks.append(Block(tapes["pairs_sum"], idx, 1.0, off, rel_rows))
            else:
                con_blocks.append(Block(tapes["pairs"], idx, 1.0, off, rel_rows))
        prev_last_x = xi[-1]

    layout.n_rows = len(asm.row_kind)
    layout.lb, layout.ub = asm.lb.copy(), asm.ub.copy()
    nlp = NLPProblem(
        n_z, asm.lb, asm.ub, asm.row_kind, obj_blocks, con_blocks,
        asm.var_stage, asm.row_stage, mode=mode, compl_blocks=compl_blocks,
    )
    nlp.layout = layout
    return nlp, layout


def build_nlp(defn: OCPDefinition, mode=None) -> Tuple[NLPProblem, VariableLayout]:
    """Transcribe ``defn``; ``mode`` selects the complementarity reformulation."""
    _check(defn)
    return _assemble([_spec_of(defn)], [], mode)


def build_minimum_time(defn: OCPDefinition, mode=None) -> Tuple[NLPProblem, VariableLayout]:
    """Free-duration transcription with the duration added to the objective."""
    if not isinstance(defn.info.horizon, FreeDuration):
        raise ValueError("minimum-time transcription needs a FreeDuration horizon")
    if not defn.info.horizon.lower > 0:
        raise ValueError("free duration lower bound must be positive")
    _check(defn)
    return _assemble([_spec_of(defn, minimum_time=True)], [], mode)


def build_multiphase(seq: PhaseSequence, mode=None) -> Tuple[NLPProblem, VariableLayout]:
    specs = []
    for ph in seq.phases:
        _check(ph.definition)
        specs.append(_spec_of(ph.definition, ph.n_e, ph.duration))
    carry = seq.carry
    if carry is None:
        carry = []
        for a, b in zip(specs[:-1], specs[1:]):
            if a.defn.info.n_x != b.defn.info.n_x:
                raise StructuralError("incompatible carried-state dimensions; give an explicit carry map")
            carry.append([(k, k) for k in range(a.defn.info.n_x)])
    if len(carry) != len(specs) - 1:
        raise StructuralError("need one carry map per phase boundary")
    for k, pairs in enumerate(carry):
        na, nb = specs[k].defn.info.n_x, specs[k + 1].defn.info.n_x
        for f, t in pairs:
            if not (0 <= f < na and 0 <= t < nb):
                raise StructuralError(f"incompatible carried-state dimensions at boundary {k}")
    return _assemble(specs, [list(c) for c in carry], mode)


def build_mpcc(objective, n: int, pairs: Sequence[Tuple[int, int]], lb=None, ub=None, mode=None,
               equalities=None, n_eq: int = 0, name: str = "mpcc") -> NLPProblem:
    """Small static MPCC ``min f(v)  s.t.  g(v) = 0,  0 <= v[a] _|_ v[b] >= 0``.

    Useful for testing the relaxations without a time grid.  All variables
    share one stage.
    """
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if mode is None:
        mode = relaxation.PerPairFixed()
    relaxation.check_mode(mode)
    idx = np.arange(n)[None, :]
    obj = [Block(record(lambda v: objective(v), n, f"{name}/objective"), idx, 1.0, 0.0)]
    cons, kinds = [], []
    row = 0
    if equalities is not None and n_eq:
        tape = record(lambda v: equalities(v), n, f"{name}/equalities")
        cons.append(Block(tape, idx, 1.0, 0.0, np.arange(n_eq)[None, :]))
        kinds += [EQUALITY] * n_eq
        row = n_eq
    for a, b in pairs:
        if not (np.isfinite(lb[a]) and np.isfinite(lb[b])):
            raise ValueError("non-finite complementarity bound")
    prod = lambda v: [(v[a] - lb[a]) * (v[b] - lb[b]) for a, b in pairs]  # noqa: E731
    prod_sum = lambda v: [sum(prod(v)[1:], prod(v)[0])]  # noqa: E731
    pair_tape = record(prod, n, f"{name}/pairs")
    compl = [Block(pair_tape, idx, 1.0, 0.0)]
    if relaxation.is_penalty(mode):
        obj.append(Block(record(prod_sum, n, f"{name}/pairs_sum"), idx, 1.0, 0.0, weight=mode.rho))
    elif relaxation.is_aggregated(mode):
        cons.append(Block(record(prod_sum, n, f"{name}/pairs_sum"), idx, 1.0, 0.0, [[row]]))
        kinds.append(RELAXABLE)
    else:
        cons.append(Block(pair_tape, idx, 1.0, 0.0, row + np.arange(len(pairs))[None, :]))
        kinds += [RELAXABLE] * len(pairs)
    return NLPProblem(n, lb, ub, kinds, obj, cons, np.zeros(n, np.int64),
                      np.zeros(len(kinds), np.int64), mode=mode, compl_blocks=compl)


# --------------------------------------------------------------------------
# packing


def _interior(v, lb, ub, kappa=INTERIOR_MARGIN):
    v = np.clip(np.asarray(v, dtype=float), lb, ub)
    fixed = lb == ub
    gap = ub - lb
    with np.errstate(invalid="ignore"):
        m_lo = kappa * np.maximum(1.0, np.abs(lb))
        m_hi = kappa * np.maximum(1.0, np.abs(ub))
        both = np.isfinite(gap)
        m_lo = np.where(both, np.minimum(m_lo, 0.5 * gap), m_lo)
        m_hi = np.where(both, np.minimum(m_hi, 0.5 * gap), m_hi)
        v = np.where(np.isfinite(lb), np.maximum(v, lb + m_lo), v)
        v = np.where(np.isfinite(ub), np.minimum(v, ub - m_hi), v)
    return np.where(fixed, lb, v)


def _guess(defn: OCPDefinition, t: float):
    info = defn.info
    if defn.initial_guess is None:
        return np.zeros(info.n_x), np.zeros(info.n_x), np.zeros(info.n_y), np.zeros(info.n_u), None
    g = defn.initial_guess(t)
    p = g[4] if len(g) > 4 else None
    return tuple(np.asarray(a, dtype=float).reshape(-1) for a in g[:4]) + (p,)


def initial_guess_vector(defn, layout: VariableLayout, push: float = INTERIOR_MARGIN) -> np.ndarray:
    """Pack the user guess at each grid time, clipped and moved strictly interior.

    ``push`` is the relative distance kept from finite bounds; a warm start can pass a small one.
    """
    z = np.zeros(layout.n_z)
    p_guess = None
    for q, ph in enumerate(layout.phases):
        d = layout.definitions[q]
        if ph.t_index >= 0:
            z[ph.t_index] = 0.5 * (layout.lb[ph.t_index] + layout.ub[ph.t_index])
        h = ph.step_sizes(duration=z[ph.t_index] if ph.t_index >= 0 else None)
        times = ph.t0 + np.concatenate([[0.0], np.cumsum(h)])
        for e in range(ph.n_e):
            x, xd, y, _, p = _guess(d, times[e + 1])
            u = _guess(d, times[e])[3]
            z[ph.x_idx[e]], z[ph.xdot_idx[e]], z[ph.y_idx[e]], z[ph.u_idx[e]] = x, xd, y, u
            if p is not None and p_guess is None:
                p_guess = np.asarray(p, dtype=float)
        if ph.x0_start >= 0:
            x0 = d.initial_state if d.initial_guess is None else _guess(d, times[0])[0]
            z[ph.x0_start : ph.x0_start + ph.n_x] = x0
    if layout.n_p:
        d0 = layout.definitions[0]
        if d0.initial_params is not None:
            p_guess = np.asarray(d0.initial_params, dtype=float)
        z[layout.p_idx] = p_guess if p_guess is not None else 0.0
    return _interior(z, layout.lb, layout.ub, push)


def _phase_times(layout: VariableLayout, z: np.ndarray) -> List[np.ndarray]:
    out, t = [], layout.phases[0].t0
    for ph in layout.phases:
        times = t + np.concatenate([[0.0], np.cumsum(ph.step_sizes(z))])
        out.append(times)
        t = times[-1]
    return out


def extract_phases(layout: VariableLayout, z) -> List[Trajectory]:
    z = np.asarray(z, dtype=float)
    if z.size != layout.n_z:
        raise ValueError(f"expected a vector of length {layout.n_z}, got {z.size}")
    trajs = []
    for q, (ph, times) in enumerate(zip(layout.phases, _phase_times(layout, z))):
        if ph.x0_start >= 0:
            x0 = z[ph.x0_start : ph.x0_start + ph.n_x]
        else:
            x0 = np.asarray(layout.definitions[q].initial_state, dtype=float)
        trajs.append(Trajectory(
            times=times,
            x=np.vstack([x0[None, :], z[ph.x_idx]]),
            xdot=z[ph.xdot_idx],
            y=z[ph.y_idx],
            u=z[ph.u_idx],
            params=z[layout.p_idx].copy(),
        ))
    return trajs


def extract_trajectory(layout: VariableLayout, z, defn=None) -> Trajectory:
    """Trajectory of the first (or only) phase; ``x[0]`` is the initial state."""
    return extract_phases(layout, z)[0]


def pack_trajectory(layout: VariableLayout, traj: Trajectory, z=None, phase: int = 0) -> np.ndarray:
    """Inverse of :func:`extract_trajectory` for one phase."""
    z = np.zeros(layout.n_z) if z is None else np.array(z, dtype=float)
    ph = layout.phases[phase]
    z[ph.x_idx] = traj.x[1:]
    z[ph.xdot_idx] = traj.xdot
    z[ph.y_idx] = traj.y
    z[ph.u_idx] = traj.u
    z[layout.p_idx] = traj.params
    if ph.x0_start >= 0:
        z[ph.x0_start : ph.x0_start + ph.n_x] = traj.x[0]
    if ph.t_index >= 0:
        z[ph.t_index] = traj.times[-1] - traj.times[0]
    return z


def complementarity_residual(traj: Trajectory, defn: OCPDefinition) -> float:
    """max over elements and pairs of the signed products, clamped at 0."""
    pairs = list(defn.complementarity)
    if not pairs:
        return 0.0
    worst = 0.0
    for i in range(1, traj.n_e + 1):
        terms = relaxation.complementarity_terms(pairs, traj.y[i - 1], defn.bounds_at(traj.times[i]))
        worst = max(worst, float(np.max(terms)))
    return worst
