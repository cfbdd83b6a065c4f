"""Finite-dimensional program assembled from taped blocks.

A :class:`Block` applies one tape to many instances.  Instance ``i`` reads its
inputs as ``offset[i] + scale[i] * z[idx[i]]`` (``idx < 0`` marks a constant
slot), so the same element function serves every finite element and the
kernels evaluate all instances in one batched sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..autodiff import Tape, evaluate, jacobian_values, weighted_gradient, weighted_hessian
from ..autodiff.derivatives import forward_values, finite_difference_jacobian
from . import relaxation

EQUALITY = 0
RELAXABLE = 1


@dataclass
class Block:
    tape: Tape
    idx: np.ndarray
    scale: np.ndarray
    offset: np.ndarray
    rows: Optional[np.ndarray] = None
    weight: float = 1.0

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.int64).reshape(-1, self.tape.n_in)
        n_inst = self.idx.shape[0]
        self.scale = np.broadcast_to(np.asarray(self.scale, dtype=float), self.idx.shape).copy()
        self.offset = np.broadcast_to(np.asarray(self.offset, dtype=float), self.idx.shape).copy()
        if self.rows is not None:
            self.rows = np.asarray(self.rows, dtype=np.int64).reshape(n_inst, self.tape.n_out)
        self._var = self.idx >= 0
        self._safe = np.where(self._var, self.idx, 0)

    @property
    def n_inst(self) -> int:
        return self.idx.shape[0]

    def points(self, z: np.ndarray) -> np.ndarray:
        return self.offset + np.where(self._var, self.scale * z[self._safe], 0.0)


def _unique_pattern(r: np.ndarray, c: np.ndarray, shape):
    n_cols = max(shape[1], 1)
    key = r.astype(np.int64) * n_cols + c
    uniq, pos = np.unique(key, return_inverse=True)
    return uniq // n_cols, uniq % n_cols, pos


class NLPProblem:
    """min f(z)  s.t.  c_E(z) = 0,  c_R(z) <= delta,  lb <= z <= ub.

    ``row_kind`` marks each constraint row as equality or relaxable.  The
    relaxation parameter ``delta`` is a plain attribute; in barrier-linked
    modes the solver overwrites it between iterations.  ``var_stage`` and
    ``row_stage`` place every variable and row on the element it belongs to
    (``-1`` = couples all elements), which the KKT solver uses for ordering.
    """

    def __init__(
        self,
        n: int,
        lb,
        ub,
        row_kind,
        objective_blocks,
        constraint_blocks,
        var_stage,
        row_stage,
        mode=None,
        compl_blocks=(),
    ):
        self.n = int(n)
        self.lb = np.asarray(lb, dtype=float).copy()
        self.ub = np.asarray(ub, dtype=float).copy()
        self.row_kind = np.asarray(row_kind, dtype=np.int8)
        self.m = self.row_kind.size
        self.objective_blocks = list(objective_blocks)
        self.constraint_blocks = list(constraint_blocks)
        self.var_stage = np.asarray(var_stage, dtype=np.int64)
        self.row_stage = np.asarray(row_stage, dtype=np.int64)
        self.mode = mode
        # per-pair product blocks kept for reporting in every mode
        self.compl_blocks = list(compl_blocks)
        if mode is not None:
            relaxation.check_mode(mode)
        if mode is not None and hasattr(mode, "delta"):
            self.delta = float(mode.delta)
        else:
            self.delta = 0.0
        self.use_finite_differences = False
        self._check_rows()
        self._build_jacobian_structure()
        self._build_hessian_structure()
        self._cache_key = None
        self._cache = None

    # structure ------------------------------------------------------------
    @property
    def barrier_linked(self) -> bool:
        return self.mode is not None and relaxation.is_barrier_linked(self.mode)

    @property
    def relaxable_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_kind == RELAXABLE)

    @property
    def equality_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_kind == EQUALITY)

    def _check_rows(self):
        seen = np.zeros(self.m, dtype=np.int64)
        for b in self.constraint_blocks:
            np.add.at(seen, b.rows.ravel(), 1)
        if np.any(seen != 1):
            raise ValueError("every constraint row must be produced by exactly one block output")
        if self.var_stage.size != self.n or self.row_stage.size != self.m:
            raise ValueError("stage arrays have the wrong length")

    def _build_jacobian_structure(self):
        rs, cs, self._jac_parts = [], [], []
        for b in self.constraint_blocks:
            pat = b.tape.jac_pattern
            gr = b.rows[:, pat.rows]
            gc = b.idx[:, pat.cols]
            keep = gc >= 0
            rs.append(gr[keep])
            cs.append(gc[keep])
            self._jac_parts.append(keep)
        r = np.concatenate(rs) if rs else np.zeros(0, np.int64)
        c = np.concatenate(cs) if cs else np.zeros(0, np.int64)
        self.jac_rows, self.jac_cols, self._jac_pos = _unique_pattern(r, c, (self.m, self.n))
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        np.add.at(indptr, self.jac_rows + 1, 1)
        self._jac_indptr = np.cumsum(indptr)

    def _build_hessian_structure(self):
        rs, cs = [], []
        self._hess_parts = []
        for b in self.objective_blocks + self.constraint_blocks:
            pat = b.tape.hess_pattern
            gi = b.idx[:, pat.rows]
            gj = b.idx[:, pat.cols]
            keep = (gi >= 0) & (gj >= 0)
            lo = np.minimum(gi, gj)
            hi = np.maximum(gi, gj)
            # an off-diagonal element entry folding onto the diagonal counts twice
            fold = np.where((gi == gj) & (pat.rows != pat.cols)[None, :], 2.0, 1.0)
            scale = b.scale[:, pat.rows] * b.scale[:, pat.cols] * fold
            rs.append(hi[keep])
            cs.append(lo[keep])
            self._hess_parts.append((keep, scale[keep]))
        r = np.concatenate(rs) if rs else np.zeros(0, np.int64)
        c = np.concatenate(cs) if cs else np.zeros(0, np.int64)
        self.hess_rows, self.hess_cols, self._hess_pos = _unique_pattern(r, c, (self.n, self.n))

    # evaluation -----------------------------------------------------------
    def _forward(self, z):
        key = z.tobytes()
        if key != self._cache_key:
            vals = []
            for b in self.objective_blocks + self.constraint_blocks:
                X = b.points(z)
                vals.append((X, forward_values(b.tape, X)))
            self._cache = vals
            self._cache_key = key
        return self._cache

    def _split(self, z):
        vals = self._forward(np.asarray(z, dtype=float))
        k = len(self.objective_blocks)
        return vals[:k], vals[k:]

    def objective(self, z) -> float:
        obj_vals, _ = self._split(z)
        total = 0.0
        for b, (_, V) in zip(self.objective_blocks, obj_vals):
            total += b.weight * float(np.sum(V[b.tape.outputs]))
        return total

    def gradient(self, z) -> np.ndarray:
        obj_vals, _ = self._split(z)
        g = np.zeros(self.n)
        for b, (X, V) in zip(self.objective_blocks, obj_vals):
            W = np.full((b.n_inst, b.tape.n_out), b.weight)
            G = weighted_gradient(b.tape, X, W, V=V) * b.scale
            g += np.bincount(b.idx[b._var], weights=G[b._var], minlength=self.n)
        return g

    def constraints(self, z) -> np.ndarray:
        _, con_vals = self._split(z)
        c = np.empty(self.m)
        for b, (_, V) in zip(self.constraint_blocks, con_vals):
            c[b.rows] = V[b.tape.outputs].T
        return c

    def jacobian_values(self, z) -> np.ndarray:
        if self.use_finite_differences:
            return self.jacobian_fd(z)[self.jac_rows, self.jac_cols]
        _, con_vals = self._split(z)
        parts = []
        for b, (X, V), keep in zip(self.constraint_blocks, con_vals, self._jac_parts):
            pat = b.tape.jac_pattern
            Jv = jacobian_values(b.tape, X, V=V) * b.scale[:, pat.cols]
            parts.append(Jv[keep])
        vals = np.concatenate(parts) if parts else np.zeros(0)
        return np.bincount(self._jac_pos, weights=vals, minlength=self.jac_rows.size)

    def jacobian(self, z) -> sp.csr_matrix:
        vals = self.jacobian_values(z)
        return sp.csr_matrix(
            (vals, self.jac_cols.copy(), self._jac_indptr.copy()), shape=(self.m, self.n)
        )

    def jacobian_fd(self, z, step: float = 1e-6) -> np.ndarray:
        """Dense central-difference Jacobian of the constraints."""
        return finite_difference_jacobian(self.constraints, z, step)

    def hessian_values(self, z, obj_weight: float, multipliers) -> np.ndarray:
        lam = np.asarray(multipliers, dtype=float)
        obj_vals, con_vals = self._split(z)
        parts = []
        blocks = self.objective_blocks + self.constraint_blocks
        for k, (b, (X, V), (keep, scale)) in enumerate(zip(blocks, obj_vals + con_vals, self._hess_parts)):
            if b.tape.hess_pattern.nnz == 0:
                parts.append(np.zeros(0))
                continue
            if k < len(self.objective_blocks):
                W = np.full((b.n_inst, b.tape.n_out), b.weight * obj_weight)
            else:
                W = lam[b.rows]
            Hv = weighted_hessian(b.tape, X, W, V=V)
            parts.append(Hv[keep] * scale)
        vals = np.concatenate(parts) if parts else np.zeros(0)
        return np.bincount(self._hess_pos, weights=vals, minlength=self.hess_rows.size)

    def hessian(self, z, obj_weight: float, multipliers) -> sp.coo_matrix:
        """Lower triangle of the Lagrangian Hessian."""
        vals = self.hessian_values(z, obj_weight, multipliers)
        return sp.coo_matrix((vals, (self.hess_rows, self.hess_cols)), shape=(self.n, self.n))

    # complementarity --------------------------------------------------------
    def complementarity_values(self, z) -> np.ndarray:
        """Signed pair products of every element, flattened."""
        z = np.asarray(z, dtype=float)
        parts = [evaluate(b.tape, b.points(z)).ravel() for b in self.compl_blocks]
        return np.concatenate(parts) if parts else np.zeros(0)

    def complementarity_residual(self, z) -> float:
        vals = self.complementarity_values(z)
        if vals.size == 0:
            return 0.0
        return float(max(0.0, vals.max()))
