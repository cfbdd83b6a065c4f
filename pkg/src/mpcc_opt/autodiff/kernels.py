"""Tape sweeps over a batch of evaluation points.

Node values are stored node-major, ``V[node, b]``, so a sweep walks the tape
once and touches every batch member per instruction.  Each sweep exists twice:
a numba kernel (``*_nb``) and a numpy loop over nodes (``*_np``).  The
module-level names dispatch on ``MPCC_OPT_DISABLE_JIT``.
"""
import numpy as np

from .._jit import USE_NUMBA, njit
from .tape import (
    ADD,
    CONST,
    COS,
    DIV,
    EXP,
    INPUT,
    LOG,
    MUL,
    NEG,
    POW,
    POWC,
    SIN,
    SQRT,
    SUB,
    TAN,
)

# --------------------------------------------------------------------------
# numba kernels


@njit
def forward_nb(op, a0, a1, val, X):
    n = op.shape[0]
    B = X.shape[1]
    V = np.empty((n, B))
    for j in range(n):
        o = op[j]
        if o == INPUT:
            for b in range(B):
                V[j, b] = X[j, b]
        elif o == CONST:
            for b in range(B):
                V[j, b] = val[j]
        else:
            p = a0[j]
            q = a1[j]
            if o == ADD:
                for b in range(B):
                    V[j, b] = V[p, b] + V[q, b]
            elif o == SUB:
                for b in range(B):
                    V[j, b] = V[p, b] - V[q, b]
            elif o == MUL:
                for b in range(B):
                    V[j, b] = V[p, b] * V[q, b]
            elif o == DIV:
                for b in range(B):
                    V[j, b] = V[p, b] / V[q, b]
            elif o == NEG:
                for b in range(B):
                    V[j, b] = -V[p, b]
            elif o == SIN:
                for b in range(B):
                    V[j, b] = np.sin(V[p, b])
            elif o == COS:
                for b in range(B):
                    V[j, b] = np.cos(V[p, b])
            elif o == TAN:
                for b in range(B):
                    V[j, b] = np.tan(V[p, b])
            elif o == EXP:
                for b in range(B):
                    V[j, b] = np.exp(V[p, b])
            elif o == LOG:
                for b in range(B):
                    v = V[p, b]
                    V[j, b] = np.log(v) if v >= 0.0 else np.nan
            elif o == SQRT:
                for b in range(B):
                    v = V[p, b]
                    V[j, b] = np.sqrt(v) if v >= 0.0 else np.nan
            elif o == POWC:
                c = val[j]
                for b in range(B):
                    V[j, b] = V[p, b] ** c
            elif o == POW:
                for b in range(B):
                    V[j, b] = V[p, b] ** V[q, b]
    return V


@njit
def tangent_nb(op, a0, a1, val, V, Xd):
    """Forward-mode tangents ``Vd[node, b, k]`` for seed directions ``Xd``."""
    n = op.shape[0]
    B = V.shape[1]
    K = Xd.shape[2]
    Vd = np.zeros((n, B, K))
    for j in range(n):
        o = op[j]
        if o == INPUT:
            for b in range(B):
                for k in range(K):
                    Vd[j, b, k] = Xd[j, b, k]
        elif o == CONST:
            continue
        else:
            p = a0[j]
            q = a1[j]
            for b in range(B):
                if o == ADD:
                    for k in range(K):
                        Vd[j, b, k] = Vd[p, b, k] + Vd[q, b, k]
                elif o == SUB:
                    for k in range(K):
                        Vd[j, b, k] = Vd[p, b, k] - Vd[q, b, k]
                elif o == MUL:
                    vp = V[p, b]
                    vq = V[q, b]
                    for k in range(K):
                        Vd[j, b, k] = Vd[p, b, k] * vq + vp * Vd[q, b, k]
                elif o == DIV:
                    vq = V[q, b]
                    r = V[j, b]
                    for k in range(K):
                        Vd[j, b, k] = (Vd[p, b, k] - r * Vd[q, b, k]) / vq
                elif o == POW:
                    vp = V[p, b]
                    vq = V[q, b]
                    r = V[j, b]
                    ga = vq * vp ** (vq - 1.0)
                    gb = r * np.log(vp) if vp > 0.0 else 0.0
                    for k in range(K):
                        Vd[j, b, k] = ga * Vd[p, b, k] + gb * Vd[q, b, k]
                else:
                    if o == NEG:
                        g = -1.0
                    elif o == SIN:
                        g = np.cos(V[p, b])
                    elif o == COS:
                        g = -np.sin(V[p, b])
                    elif o == TAN:
                        g = 1.0 + V[j, b] * V[j, b]
                    elif o == EXP:
                        g = V[j, b]
                    elif o == LOG:
                        g = 1.0 / V[p, b]
                    elif o == SQRT:
                        g = 0.5 / V[j, b]
                    else:  # POWC
                        c = val[j]
                        g = c * V[p, b] ** (c - 1.0)
                    for k in range(K):
                        Vd[j, b, k] = g * Vd[p, b, k]
    return Vd


@njit
def reverse_nb(op, a0, a1, val, V, outputs, W, n_in):
    """Adjoint of ``sum_k W[k, b] * out_k`` with respect to the inputs."""
    n = op.shape[0]
    B = V.shape[1]
    A = np.zeros((n, B))
    for k in range(outputs.shape[0]):
        o = outputs[k]
        for b in range(B):
            A[o, b] += W[k, b]
    for j in range(n - 1, n_in - 1, -1):
        o = op[j]
        if o == CONST:
            continue
        p = a0[j]
        q = a1[j]
        for b in range(B):
            w = A[j, b]
            if w == 0.0:
                continue
            if o == ADD:
                A[p, b] += w
                A[q, b] += w
            elif o == SUB:
                A[p, b] += w
                A[q, b] -= w
            elif o == MUL:
                A[p, b] += w * V[q, b]
                A[q, b] += w * V[p, b]
            elif o == DIV:
                vq = V[q, b]
                A[p, b] += w / vq
                A[q, b] -= w * V[j, b] / vq
            elif o == NEG:
                A[p, b] -= w
            elif o == SIN:
                A[p, b] += w * np.cos(V[p, b])
            elif o == COS:
                A[p, b] -= w * np.sin(V[p, b])
            elif o == TAN:
                A[p, b] += w * (1.0 + V[j, b] * V[j, b])
            elif o == EXP:
                A[p, b] += w * V[j, b]
            elif o == LOG:
                A[p, b] += w / V[p, b]
            elif o == SQRT:
                A[p, b] += w * 0.5 / V[j, b]
            elif o == POWC:
                c = val[j]
                A[p, b] += w * c * V[p, b] ** (c - 1.0)
            elif o == POW:
                vp = V[p, b]
                vq = V[q, b]
                A[p, b] += w * vq * vp ** (vq - 1.0)
                if vp > 0.0:
                    A[q, b] += w * V[j, b] * np.log(vp)
    return A[:n_in].copy()


@njit
def second_order_nb(op, a0, a1, val, V, Vd, outputs, W, n_in):
    """Forward-over-reverse sweep.

    Returns the input adjoints ``(n_in, B)`` and their tangents
    ``(n_in, B, K)``; with identity seeds the latter is the Hessian of the
    weighted output sum.
    """
    n = op.shape[0]
    B = V.shape[1]
    K = Vd.shape[2]
    A = np.zeros((n, B))
    Ad = np.zeros((n, B, K))
    for k in range(outputs.shape[0]):
        o = outputs[k]
        for b in range(B):
            A[o, b] += W[k, b]
    for j in range(n - 1, n_in - 1, -1):
        o = op[j]
        if o == CONST:
            continue
        p = a0[j]
        q = a1[j]
        for b in range(B):
            w = A[j, b]
            if o == ADD:
                A[p, b] += w
                A[q, b] += w
                for k in range(K):
                    wd = Ad[j, b, k]
                    Ad[p, b, k] += wd
                    Ad[q, b, k] += wd
            elif o == SUB:
                A[p, b] += w
                A[q, b] -= w
                for k in range(K):
                    wd = Ad[j, b, k]
                    Ad[p, b, k] += wd
                    Ad[q, b, k] -= wd
            elif o == NEG:
                A[p, b] -= w
                for k in range(K):
                    Ad[p, b, k] -= Ad[j, b, k]
            elif o == MUL:
                vp = V[p, b]
                vq = V[q, b]
                A[p, b] += w * vq
                A[q, b] += w * vp
                for k in range(K):
                    wd = Ad[j, b, k]
                    Ad[p, b, k] += wd * vq + w * Vd[q, b, k]
                    Ad[q, b, k] += wd * vp + w * Vd[p, b, k]
            elif o == DIV:
                vq = V[q, b]
                r = V[j, b]
                A[p, b] += w / vq
                A[q, b] -= w * r / vq
                for k in range(K):
                    wd = Ad[j, b, k]
                    vqd = Vd[q, b, k]
                    rd = Vd[j, b, k]
                    Ad[p, b, k] += wd / vq - w * vqd / (vq * vq)
                    Ad[q, b, k] -= wd * r / vq + w * (rd * vq - r * vqd) / (vq * vq)
            elif o == POW:
                vp = V[p, b]
                vq = V[q, b]
                r = V[j, b]
                lg = np.log(vp) if vp > 0.0 else 0.0
                ga = vq * vp ** (vq - 1.0)
                gb = r * lg
                A[p, b] += w * ga
                A[q, b] += w * gb
                for k in range(K):
                    wd = Ad[j, b, k]
                    vpd = Vd[p, b, k]
                    vqd = Vd[q, b, k]
                    rd = Vd[j, b, k]
                    gad = (vqd * r + vq * rd) / vp - vq * r * vpd / (vp * vp)
                    gbd = rd * lg + r * vpd / vp
                    Ad[p, b, k] += wd * ga + w * gad
                    Ad[q, b, k] += wd * gb + w * gbd
            else:
                vp = V[p, b]
                if o == SIN:
                    g = np.cos(vp)
                    h = -np.sin(vp)
                elif o == COS:
                    g = -np.sin(vp)
                    h = -np.cos(vp)
                elif o == TAN:
                    r = V[j, b]
                    g = 1.0 + r * r
                    h = 2.0 * r * g
                elif o == EXP:
                    g = V[j, b]
                    h = g
                elif o == LOG:
                    g = 1.0 / vp
                    h = -g * g
                elif o == SQRT:
                    r = V[j, b]
                    g = 0.5 / r
                    h = -0.25 / (r * r * r)
                else:  # POWC
                    c = val[j]
                    g = c * vp ** (c - 1.0)
                    h = c * (c - 1.0) * vp ** (c - 2.0) if c != 1.0 else 0.0
                A[p, b] += w * g
                for k in range(K):
                    Ad[p, b, k] += Ad[j, b, k] * g + w * h * Vd[p, b, k]
    return A[:n_in].copy(), Ad[:n_in].copy()


# --------------------------------------------------------------------------
# numpy fallbacks: one python iteration per node, vectorized over the batch


def _unary_np(o, x, r, c):
    """Value of the unary node given operand ``x``."""
    if o == NEG:
        return -x
    if o == SIN:
        return np.sin(x)
    if o == COS:
        return np.cos(x)
    if o == TAN:
        return np.tan(x)
    if o == EXP:
        return np.exp(x)
    if o == LOG:
        return np.log(x)
    if o == SQRT:
        return np.sqrt(x)
    return x**c


def _dunary_np(o, x, r, c):
    # first and second derivative of the unary node
    if o == NEG:
        return -np.ones_like(x), np.zeros_like(x)
    if o == SIN:
        return np.cos(x), -np.sin(x)
    if o == COS:
        return -np.sin(x), -np.cos(x)
    if o == TAN:
        g = 1.0 + r * r
        return g, 2.0 * r * g
    if o == EXP:
        return r, r
    if o == LOG:
        g = 1.0 / x
        return g, -g * g
    if o == SQRT:
        return 0.5 / r, -0.25 / (r * r * r)
    g = c * x ** (c - 1.0)
    h = c * (c - 1.0) * x ** (c - 2.0) if c != 1.0 else np.zeros_like(x)
    return g, h


def forward_np(op, a0, a1, val, X):
    n = op.shape[0]
    V = np.empty((n, X.shape[1]))
    with np.errstate(all="ignore"):
        for j in range(n):
            o = op[j]
            if o == INPUT:
                V[j] = X[j]
            elif o == CONST:
                V[j] = val[j]
            elif o == ADD:
                V[j] = V[a0[j]] + V[a1[j]]
            elif o == SUB:
                V[j] = V[a0[j]] - V[a1[j]]
            elif o == MUL:
                V[j] = V[a0[j]] * V[a1[j]]
            elif o == DIV:
                V[j] = V[a0[j]] / V[a1[j]]
            elif o == POW:
                V[j] = V[a0[j]] ** V[a1[j]]
            else:
                V[j] = _unary_np(o, V[a0[j]], None, val[j])
    return V


def tangent_np(op, a0, a1, val, V, Xd):
    n = op.shape[0]
    Vd = np.zeros((n,) + Xd.shape[1:])
    with np.errstate(all="ignore"):
        for j in range(n):
            o = op[j]
            if o == INPUT:
                Vd[j] = Xd[j]
            elif o == CONST:
                continue
            else:
                p, q = a0[j], a1[j]
                if o == ADD:
                    Vd[j] = Vd[p] + Vd[q]
                elif o == SUB:
                    Vd[j] = Vd[p] - Vd[q]
                elif o == MUL:
                    Vd[j] = Vd[p] * V[q][:, None] + V[p][:, None] * Vd[q]
                elif o == DIV:
                    Vd[j] = (Vd[p] - V[j][:, None] * Vd[q]) / V[q][:, None]
                elif o == POW:
                    vp, vq, r = V[p], V[q], V[j]
                    ga = vq * vp ** (vq - 1.0)
                    gb = np.where(vp > 0.0, r * np.log(np.where(vp > 0.0, vp, 1.0)), 0.0)
                    Vd[j] = ga[:, None] * Vd[p] + gb[:, None] * Vd[q]
                else:
                    g, _ = _dunary_np(o, V[p], V[j], val[j])
                    Vd[j] = g[:, None] * Vd[p]
    return Vd


def reverse_np(op, a0, a1, val, V, outputs, W, n_in):
    n = op.shape[0]
    A = np.zeros((n, V.shape[1]))
    for k in range(outputs.shape[0]):
        A[outputs[k]] += W[k]
    with np.errstate(all="ignore"):
        for j in range(n - 1, n_in - 1, -1):
            o = op[j]
            if o == CONST:
                continue
            w = A[j]
            if not w.any():
                continue
            p, q = a0[j], a1[j]
            if o == ADD:
                A[p] += w
                A[q] += w
            elif o == SUB:
                A[p] += w
                A[q] -= w
            elif o == MUL:
                A[p] += w * V[q]
                A[q] += w * V[p]
            elif o == DIV:
                A[p] += w / V[q]
                A[q] -= w * V[j] / V[q]
            elif o == POW:
                vp, vq = V[p], V[q]
                A[p] += w * vq * vp ** (vq - 1.0)
                pos = vp > 0.0
                A[q] += np.where(pos, w * V[j] * np.log(np.where(pos, vp, 1.0)), 0.0)
            else:
                g, _ = _dunary_np(o, V[p], V[j], val[j])
                A[p] += w * g
    return A[:n_in].copy()


def second_order_np(op, a0, a1, val, V, Vd, outputs, W, n_in):
    n = op.shape[0]
    A = np.zeros((n, V.shape[1]))
    Ad = np.zeros((n,) + Vd.shape[1:])
    for k in range(outputs.shape[0]):
        A[outputs[k]] += W[k]
    with np.errstate(all="ignore"):
        for j in range(n - 1, n_in - 1, -1):
            o = op[j]
            if o == CONST:
                continue
            p, q = a0[j], a1[j]
            w = A[j]
            wd = Ad[j]
            wc = w[:, None]
            if o == ADD:
                A[p] += w
                A[q] += w
                Ad[p] += wd
                Ad[q] += wd
            elif o == SUB:
                A[p] += w
                A[q] -= w
                Ad[p] += wd
                Ad[q] -= wd
            elif o == NEG:
                A[p] -= w
                Ad[p] -= wd
            elif o == MUL:
                vp, vq = V[p][:, None], V[q][:, None]
                A[p] += w * V[q]
                A[q] += w * V[p]
                Ad[p] += wd * vq + wc * Vd[q]
                Ad[q] += wd * vp + wc * Vd[p]
            elif o == DIV:
                vq, r = V[q][:, None], V[j][:, None]
                A[p] += w / V[q]
                A[q] -= w * V[j] / V[q]
                Ad[p] += wd / vq - wc * Vd[q] / (vq * vq)
                Ad[q] -= wd * r / vq + wc * (Vd[j] * vq - r * Vd[q]) / (vq * vq)
            elif o == POW:
                vp, vq, r = V[p], V[q], V[j]
                pos = vp > 0.0
                lg = np.where(pos, np.log(np.where(pos, vp, 1.0)), 0.0)
                ga = vq * vp ** (vq - 1.0)
                gb = r * lg
                A[p] += w * ga
                A[q] += w * gb
                vp_, vq_, r_ = vp[:, None], vq[:, None], r[:, None]
                gad = (Vd[q] * r_ + vq_ * Vd[j]) / vp_ - vq_ * r_ * Vd[p] / (vp_ * vp_)
                gbd = Vd[j] * lg[:, None] + r_ * Vd[p] / vp_
                Ad[p] += wd * ga[:, None] + wc * gad
                Ad[q] += wd * gb[:, None] + wc * gbd
            else:
                g, h = _dunary_np(o, V[p], V[j], val[j])
                A[p] += w * g
                Ad[p] += wd * g[:, None] + (w * h)[:, None] * Vd[p]
    return A[:n_in].copy(), Ad[:n_in].copy()


if USE_NUMBA:
    forward = forward_nb
    tangent = tangent_nb
    reverse = reverse_nb
    second_order = second_order_nb
else:
    forward = forward_np
    tangent = tangent_np
    reverse = reverse_np
    second_order = second_order_np
