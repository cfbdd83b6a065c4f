"""Values and derivatives of recorded tapes.

Batched entry points take points as ``(B, n_in)`` arrays and return per-point
values laid out along the tape's sparsity patterns; the single-point helpers
(:func:`gradient`, :func:`jacobian`, :func:`hessian_lagrangian`) wrap them.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .tape import OP_NAMES, EvaluationError, SparsityPattern, Tape


def _as_batch(tape: Tape, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != tape.n_in:
        raise ValueError(f"expected {tape.n_in} inputs, got {X.shape[1]}")
    return X


def _node_major(tape: Tape, X: np.ndarray) -> np.ndarray:
    # kernels read inputs from V[:n_in]; pad to n_nodes rows is unnecessary
    return np.ascontiguousarray(X.T)


def _check(tape: Tape, V: np.ndarray):
    out = V[tape.outputs]
    if np.all(np.isfinite(out)):
        return
    bad = ~np.all(np.isfinite(V), axis=1)
    node = int(np.argmax(bad))
    raise EvaluationError(
        f"non-finite value at node {node} ({OP_NAMES[int(tape.op[node])]}) of tape {tape.name!r}"
    )


def forward_values(tape: Tape, X) -> np.ndarray:
    """All node values, node-major ``(n_nodes, B)``."""
    X = _as_batch(tape, X)
    V = kernels.forward(tape.op, tape.a0, tape.a1, tape.val, _node_major(tape, X))
    _check(tape, V)
    return V


def evaluate(tape: Tape, X) -> np.ndarray:
    """Outputs at a batch of points, ``(B, n_out)``."""
    V = forward_values(tape, X)
    return V[tape.outputs].T.copy()


def replay(tape: Tape, point) -> np.ndarray:
    """Outputs at a single point."""
    return evaluate(tape, np.asarray(point, dtype=np.float64)[None, :])[0]


def _identity_seeds(n_in: int, B: int) -> np.ndarray:
    Xd = np.zeros((n_in, B, n_in))
    for i in range(n_in):
        Xd[i, :, i] = 1.0
    return Xd


def jacobian_values(tape: Tape, X, V=None) -> np.ndarray:
    """Jacobian entries along ``tape.jac_pattern`` for each point, ``(B, nnz)``."""
    X = _as_batch(tape, X)
    if V is None:
        V = forward_values(tape, X)
    pat = tape.jac_pattern
    if pat.nnz == 0:
        return np.zeros((X.shape[0], 0))
    Vd = kernels.tangent(
        tape.op, tape.a0, tape.a1, tape.val, V, _identity_seeds(tape.n_in, X.shape[0])
    )
    # Vd[outputs[r], b, c]
    return Vd[tape.outputs[pat.rows], :, pat.cols].T.copy()


def weighted_gradient(tape: Tape, X, W, V=None) -> np.ndarray:
    """Gradient of ``sum_k W[b, k] * out_k`` for each point, ``(B, n_in)``."""
    X = _as_batch(tape, X)
    if V is None:
        V = forward_values(tape, X)
    W = np.ascontiguousarray(np.asarray(W, dtype=np.float64).reshape(X.shape[0], tape.n_out).T)
    A = kernels.reverse(tape.op, tape.a0, tape.a1, tape.val, V, tape.outputs, W, tape.n_in)
    return A.T.copy()


def weighted_hessian(tape: Tape, X, W, V=None) -> np.ndarray:
    """Hessian entries of ``sum_k W[b, k] * out_k`` along ``tape.hess_pattern``, ``(B, nnz)``."""
    X = _as_batch(tape, X)
    pat = tape.hess_pattern
    if pat.nnz == 0:
        return np.zeros((X.shape[0], 0))
    if V is None:
        V = forward_values(tape, X)
    B = X.shape[0]
    Vd = kernels.tangent(tape.op, tape.a0, tape.a1, tape.val, V, _identity_seeds(tape.n_in, B))
    W = np.ascontiguousarray(np.asarray(W, dtype=np.float64).reshape(B, tape.n_out).T)
    _, Ad = kernels.second_order(
        tape.op, tape.a0, tape.a1, tape.val, V, Vd, tape.outputs, W, tape.n_in
    )
    return Ad[pat.rows, :, pat.cols].T.copy()


# --------------------------------------------------------------------------
# single-point API


def gradient(tape: Tape, point) -> np.ndarray:
    if tape.n_out != 1:
        raise ValueError("gradient requires a scalar tape")
    x = np.asarray(point, dtype=np.float64)[None, :]
    return weighted_gradient(tape, x, np.ones((1, 1)))[0]


def jacobian(tape: Tape, point) -> sp.csr_matrix:
    """Sparse Jacobian; every pattern entry is stored, even if its value is 0."""
    x = np.asarray(point, dtype=np.float64)[None, :]
    vals = jacobian_values(tape, x)[0]
    pat = tape.jac_pattern
    return _csr(vals, pat)


def hessian_lagrangian(
    obj_tape: Tape | None, con_tape: Tape | None, point, obj_weight: float, multipliers
) -> sp.csr_matrix:
    """Lower triangle of the Hessian of ``obj_weight*f + multipliers @ c``."""
    x = np.asarray(point, dtype=np.float64)
    n = obj_tape.n_in if obj_tape is not None else con_tape.n_in
    parts = []
    if obj_tape is not None:
        w = np.full((1, 1), float(obj_weight))
        parts.append((obj_tape.hess_pattern, weighted_hessian(obj_tape, x[None, :], w)[0]))
    if con_tape is not None:
        lam = np.asarray(multipliers, dtype=np.float64)
        if lam.size != con_tape.n_out:
            raise ValueError("multipliers length must equal the constraint count")
        parts.append((con_tape.hess_pattern, weighted_hessian(con_tape, x[None, :], lam[None, :])[0]))
    rows = np.concatenate([p.rows for p, _ in parts]) if parts else np.zeros(0, np.int64)
    cols = np.concatenate([p.cols for p, _ in parts]) if parts else np.zeros(0, np.int64)
    vals = np.concatenate([v for _, v in parts]) if parts else np.zeros(0)
    H = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    H.sum_duplicates()
    H.sort_indices()
    return H


def sparsity(tape: Tape) -> SparsityPattern:
    return tape.jac_pattern


def hessian_sparsity(tape: Tape) -> SparsityPattern:
    return tape.hess_pattern


def _csr(vals: np.ndarray, pat: SparsityPattern) -> sp.csr_matrix:
    m, n = pat.shape
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(indptr, pat.rows + 1, 1)
    indptr = np.cumsum(indptr)
    # pattern is row-major already
    return sp.csr_matrix((vals.copy(), pat.cols.copy(), indptr), shape=(m, n))


def finite_difference_jacobian(fun, x, step: float = 1e-6) -> np.ndarray:
    """Dense central-difference Jacobian of ``fun`` (debugging fallback)."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.atleast_1d(fun(x))
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        J[:, i] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step)
    return J
