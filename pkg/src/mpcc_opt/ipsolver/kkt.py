"""Symmetric indefinite KKT factorization with inertia.

Transcribed problems give a KKT matrix that is block tridiagonal once its
unknowns are grouped by element (stage), plus a dense border for the
parameters and durations.  :class:`KKTSystem` factors it by block LDL^T:

    S_1 = A_1,   S_b = A_b - C_b S_{b-1}^{-1} C_b^T
    G_b = B_b - G_{b-1} S_{b-1}^{-1} C_b^T
    E   = A_border - sum_b G_b S_b^{-1} G_b^T

with every S_b and E factored by Bunch-Kaufman pivoting.  The inertia of K is
the sum of the block inertias.  Blocks are padded to a common size with unit
diagonals, whose positive pivots are subtracted again.

Two backends run the same sweep: a numba kernel with an in-repo
Bunch-Kaufman factorization, and a loop over LAPACK ``dsytrf``/``dsytrs``
(``MPCC_OPT_DISABLE_JIT=1``).  Problems without stage structure use a single
dense factorization of the whole matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .._jit import USE_NUMBA, njit

ALPHA_BK = (1.0 + np.sqrt(17.0)) / 8.0
# Absolute zero-pivot threshold.  A relative one misfires here: barrier diagonals near an active
# bound reach 1e28 while the constraint block carries pivots of order 1e-10.
ZERO_PIVOT = 1e-20


class SingularKKTError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Inertia:
    positive: int
    negative: int
    zero: int


# --------------------------------------------------------------------------
# Bunch-Kaufman (numba)


@njit
def _d_inertia(d1, d2, bs, n, tol):
    npos = 0
    nneg = 0
    nzer = 0
    k = 0
    while k < n:
        if bs[k] == 1:
            if d1[k] > tol:
                npos += 1
            elif d1[k] < -tol:
                nneg += 1
            else:
                nzer += 1
            k += 1
        else:
            a = d1[k]
            c = d1[k + 1]
            b = d2[k]
            det = a * c - b * b
            if det < 0.0:
                npos += 1
                nneg += 1
            elif det > 0.0:
                if a + c > 0.0:
                    npos += 2
                else:
                    nneg += 2
            else:
                nzer += 1
                if a + c > 0.0:
                    npos += 1
                elif a + c < 0.0:
                    nneg += 1
                else:
                    nzer += 1
            k += 2
    return npos, nneg, nzer


@njit
def bk_factor(A0):
    """P A P^T = L D L^T.  Returns (L, d1, d2, bs, perm, npos, nneg, nzero)."""
    n = A0.shape[0]
    A = A0.copy()
    L = np.eye(n)
    d1 = np.zeros(n)
    d2 = np.zeros(n)
    bs = np.ones(n, dtype=np.int64)
    perm = np.arange(n)
    k = 0
    while k < n:
        absakk = abs(A[k, k])
        r = k
        colmax = 0.0
        for i in range(k + 1, n):
            v = abs(A[i, k])
            if v > colmax:
                colmax = v
                r = i
        size = 1
        kp = k
        if max(absakk, colmax) == 0.0:
            d1[k] = 0.0
            k += 1
            continue
        if absakk < ALPHA_BK * colmax:
            rowmax = 0.0
            for j in range(k, n):
                if j != r:
                    v = abs(A[r, j])
                    if v > rowmax:
                        rowmax = v
            if absakk >= ALPHA_BK * colmax * (colmax / rowmax):
                kp = k
            elif abs(A[r, r]) >= ALPHA_BK * rowmax:
                kp = r
            else:
                kp = r
                size = 2
        t = k if size == 1 else k + 1
        if kp != t:
            # symmetric interchange of t and kp
            for j in range(n):
                tmp = A[t, j]
                A[t, j] = A[kp, j]
                A[kp, j] = tmp
            for i in range(n):
                tmp = A[i, t]
                A[i, t] = A[i, kp]
                A[i, kp] = tmp
            for j in range(k):
                tmp = L[t, j]
                L[t, j] = L[kp, j]
                L[kp, j] = tmp
            tmp2 = perm[t]
            perm[t] = perm[kp]
            perm[kp] = tmp2
        if size == 1:
            d = A[k, k]
            d1[k] = d
            for i in range(k + 1, n):
                L[i, k] = A[i, k] / d
            for j in range(k + 1, n):
                ajk = A[j, k]
                for i in range(k + 1, n):
                    A[i, j] -= L[i, k] * ajk
            k += 1
        else:
            a = A[k, k]
            b = A[k + 1, k]
            c = A[k + 1, k + 1]
            det = a * c - b * b
            d1[k] = a
            d1[k + 1] = c
            d2[k] = b
            bs[k] = 2
            bs[k + 1] = 0
            for i in range(k + 2, n):
                w0 = A[i, k]
                w1 = A[i, k + 1]
                L[i, k] = (w0 * c - w1 * b) / det
                L[i, k + 1] = (w1 * a - w0 * b) / det
            for j in range(k + 2, n):
                w0 = A[j, k]
                w1 = A[j, k + 1]
                for i in range(k + 2, n):
                    A[i, j] -= L[i, k] * w0 + L[i, k + 1] * w1
            k += 2
    npos, nneg, nzer = _d_inertia(d1, d2, bs, n, ZERO_PIVOT)
    return L, d1, d2, bs, perm, npos, nneg, nzer


@njit
def bk_solve(L, d1, d2, bs, perm, B):
    """Solve A X = B for ``B`` of shape (n, k)."""
    n = L.shape[0]
    m = B.shape[1]
    X = np.empty((n, m))
    for i in range(n):
        for c in range(m):
            X[i, c] = B[perm[i], c]
    # L w = y
    for j in range(n):
        for i in range(j + 1, n):
            lij = L[i, j]
            if lij != 0.0:
                for c in range(m):
                    X[i, c] -= lij * X[j, c]
    # D v = w
    k = 0
    while k < n:
        if bs[k] == 1:
            d = d1[k]
            for c in range(m):
                X[k, c] = X[k, c] / d if d != 0.0 else 0.0
            k += 1
        else:
            a = d1[k]
            b = d2[k]
            cc = d1[k + 1]
            det = a * cc - b * b
            for c in range(m):
                x0 = X[k, c]
                x1 = X[k + 1, c]
                X[k, c] = (cc * x0 - b * x1) / det
                X[k + 1, c] = (a * x1 - b * x0) / det
            k += 2
    # L^T u = v
    for j in range(n - 1, -1, -1):
        for i in range(j + 1, n):
            lij = L[i, j]
            if lij != 0.0:
                for c in range(m):
                    X[j, c] -= lij * X[i, c]
    out = np.empty((n, m))
    for i in range(n):
        for c in range(m):
            out[perm[i], c] = X[i, c]
    return out


@njit
def block_factor_nb(A, C, G0, AB):
    N = A.shape[0]
    s = A.shape[1]
    nb = AB.shape[0]
    Ls = np.zeros((N, s, s))
    D1 = np.zeros((N, s))
    D2 = np.zeros((N, s))
    BS = np.ones((N, s), dtype=np.int64)
    P = np.zeros((N, s), dtype=np.int64)
    G = np.zeros((N, nb, s))
    E = AB.copy()
    npos = 0
    nneg = 0
    nzer = 0
    for b in range(N):
        S = A[b].copy()
        if b > 0:
            X = bk_solve(Ls[b - 1], D1[b - 1], D2[b - 1], BS[b - 1], P[b - 1], np.ascontiguousarray(C[b].T))
            S -= C[b] @ X
            G[b] = G0[b] - G[b - 1] @ X
        else:
            G[b] = G0[b]
        L, d1, d2, bs, perm, p_, n_, z_ = bk_factor(S)
        Ls[b] = L
        D1[b] = d1
        D2[b] = d2
        BS[b] = bs
        P[b] = perm
        npos += p_
        nneg += n_
        nzer += z_
        if nb > 0:
            Y = bk_solve(L, d1, d2, bs, perm, np.ascontiguousarray(G[b].T))
            E -= G[b] @ Y
    if nb > 0:
        EL, ed1, ed2, ebs, eperm, p_, n_, z_ = bk_factor(E)
        npos += p_
        nneg += n_
        nzer += z_
    else:
        EL = np.zeros((0, 0))
        ed1 = np.zeros(0)
        ed2 = np.zeros(0)
        ebs = np.zeros(0, dtype=np.int64)
        eperm = np.zeros(0, dtype=np.int64)
    return Ls, D1, D2, BS, P, G, EL, ed1, ed2, ebs, eperm, npos, nneg, nzer


@njit
def block_solve_nb(Ls, D1, D2, BS, P, C, G, EL, ed1, ed2, ebs, eperm, r, rB):
    N = Ls.shape[0]
    s = Ls.shape[1]
    nb = rB.shape[0]
    rt = r.copy()
    v = np.zeros((N, s))
    rBt = rB.copy()
    for b in range(N):
        if b > 0:
            rt[b] -= C[b] @ v[b - 1]
        v[b] = bk_solve(Ls[b], D1[b], D2[b], BS[b], P[b], rt[b].reshape(s, 1))[:, 0]
        if nb > 0:
            rBt -= G[b] @ v[b]
    xB = np.zeros(nb)
    if nb > 0:
        xB = np.ascontiguousarray(bk_solve(EL, ed1, ed2, ebs, eperm, rBt.reshape(nb, 1))[:, 0])
    x = np.zeros((N, s))
    for b in range(N - 1, -1, -1):
        t = rt[b].copy()
        if nb > 0:
            t -= np.ascontiguousarray(G[b].T) @ xB
        if b < N - 1:
            t -= np.ascontiguousarray(C[b + 1].T) @ x[b + 1]
        x[b] = bk_solve(Ls[b], D1[b], D2[b], BS[b], P[b], t.reshape(s, 1))[:, 0]
    return x, xB


# --------------------------------------------------------------------------
# LAPACK backend


def _lapack_factor(S):
    ldu, ipiv, info = lapack.dsytrf(S, lower=1)
    if info < 0:  # pragma: no cover
        raise SingularKKTError(f"dsytrf argument error {info}")
    return ldu, ipiv, _lapack_inertia(ldu, ipiv, S)


def _lapack_inertia(ldu, ipiv, S):
    n = S.shape[0]
    tol = ZERO_PIVOT
    npos = nneg = nzer = 0
    k = 0
    while k < n:
        if ipiv[k] > 0:
            d = ldu[k, k]
            if d > tol:
                npos += 1
            elif d < -tol:
                nneg += 1
            else:
                nzer += 1
            k += 1
        else:
            a, b, c = ldu[k, k], ldu[k + 1, k], ldu[k + 1, k + 1]
            det = a * c - b * b
            if det < 0:
                npos += 1
                nneg += 1
            elif det > 0:
                if a + c > 0:
                    npos += 2
                else:
                    nneg += 2
            else:
                nzer += 2
            k += 2
    return npos, nneg, nzer


def _lapack_solve(f, B):
    ldu, ipiv, inert = f
    if B.size == 0:
        return np.zeros_like(B)
    if inert[2]:
        # dsytrs divides by exact zero pivots; treat them as removed
        with np.errstate(divide="ignore", invalid="ignore"):
            x, info = lapack.dsytrs(ldu, ipiv, B, lower=1)
        return np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0)
    x, info = lapack.dsytrs(ldu, ipiv, B, lower=1)
    return x


def block_factor_np(A, C, G0, AB):
    N, s, _ = A.shape
    nb = AB.shape[0]
    facs = []
    G = np.zeros((N, nb, s))
    E = AB.copy()
    npos = nneg = nzer = 0
    for b in range(N):
        S = A[b].copy()
        if b > 0:
            X = _lapack_solve(facs[b - 1], np.ascontiguousarray(C[b].T))
            S -= C[b] @ X
            G[b] = G0[b] - G[b - 1] @ X
        else:
            G[b] = G0[b]
        f = _lapack_factor(S)
        facs.append(f)
        npos, nneg, nzer = npos + f[2][0], nneg + f[2][1], nzer + f[2][2]
        if nb:
            E -= G[b] @ _lapack_solve(f, np.ascontiguousarray(G[b].T))
    ef = None
    if nb:
        ef = _lapack_factor(E)
        npos, nneg, nzer = npos + ef[2][0], nneg + ef[2][1], nzer + ef[2][2]
    return facs, G, ef, npos, nneg, nzer


def block_solve_np(facs, C, G, ef, r, rB):
    N, s = r.shape
    rt = r.copy()
    v = np.zeros((N, s))
    rBt = rB.copy()
    for b in range(N):
        if b > 0:
            rt[b] -= C[b] @ v[b - 1]
        v[b] = _lapack_solve(facs[b], rt[b][:, None])[:, 0]
        if rB.size:
            rBt -= G[b] @ v[b]
    xB = _lapack_solve(ef, rBt[:, None])[:, 0] if rB.size else np.zeros(0)
    x = np.zeros((N, s))
    for b in range(N - 1, -1, -1):
        t = rt[b].copy()
        if rB.size:
            t -= G[b].T @ xB
        if b < N - 1:
            t -= C[b + 1].T @ x[b + 1]
        x[b] = _lapack_solve(facs[b], t[:, None])[:, 0]
    return x, xB


# --------------------------------------------------------------------------
# front end


class KKTSystem:
    """Fixed-pattern symmetric matrix given as full (both triangles) triplets.

    ``stage[i]`` groups unknown ``i``; ``-1`` marks the border.  Duplicate
    triplets are summed.  When some entry couples stages more than one
    apart, the dense path is used.
    """

    def __init__(self, stage, rows, cols, dense: bool = False, use_numba: bool | None = None):
        self.stage = np.asarray(stage, dtype=np.int64)
        self.n = self.stage.size
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.use_numba = USE_NUMBA if use_numba is None else bool(use_numba)
        self.dense = bool(dense) or not self._plan_blocks()
        if self.dense:
            self._flat = self.rows * self.n + self.cols
        self._K = None
        self._fac = None

    def _plan_blocks(self) -> bool:
        st = self.stage
        inner = st >= 0
        if not inner.any():
            return False
        N = int(st.max()) + 1
        counts = np.bincount(st[inner], minlength=N)
        s = max(int(counts.max()), 1)
        # position within its stage (border counts as its own group), in index order
        order = np.argsort(st, kind="stable")
        ss = st[order]
        first = np.searchsorted(ss, ss, side="left")
        local = np.empty(self.n, dtype=np.int64)
        local[order] = np.arange(self.n) - first
        si, sj = st[self.rows], st[self.cols]
        li, lj = local[self.rows], local[self.cols]
        bi, bj = si < 0, sj < 0
        nb = int((~inner).sum())
        cls = np.full(self.rows.size, -1, dtype=np.int64)  # -1 ignored (transpose copies)
        flat = np.zeros(self.rows.size, dtype=np.int64)
        # diagonal blocks
        m = ~bi & ~bj & (si == sj)
        cls[m], flat[m] = 0, (si[m] * s + li[m]) * s + lj[m]
        # sub-diagonal blocks C_b (row stage b, col stage b-1)
        m = ~bi & ~bj & (si == sj + 1)
        cls[m], flat[m] = 1, (si[m] * s + li[m]) * s + lj[m]
        # border rows against stage columns
        m = bi & ~bj
        cls[m], flat[m] = 2, (sj[m] * nb + li[m]) * s + lj[m]
        m = bi & bj
        cls[m], flat[m] = 3, li[m] * nb + lj[m]
        bad = ~bi & ~bj & (np.abs(si - sj) > 1)
        if bad.any():
            return False
        self.N, self.s, self.nb = N, s, nb
        self._local = local
        self._cls, self._flatb = cls, flat
        self._pad = N * s - int(inner.sum())
        pad_mask = np.ones((N, s), dtype=bool)
        pad_mask[st[inner], local[inner]] = False
        self._pad_mask = pad_mask
        self._inner = np.flatnonzero(inner)
        self._border = np.flatnonzero(~inner)
        self._border_pos = local[self._border]
        return True

    def _assemble(self, vals):
        N, s, nb = self.N, self.s, self.nb
        out = []
        for code, size in ((0, N * s * s), (1, N * s * s), (2, N * nb * s), (3, nb * nb)):
            m = self._cls == code
            out.append(np.bincount(self._flatb[m], weights=vals[m], minlength=size).astype(float))
        A = out[0].reshape(N, s, s)
        b_idx, l_idx = np.nonzero(self._pad_mask)
        A[b_idx, l_idx, l_idx] = 1.0
        return A, out[1].reshape(N, s, s), out[2].reshape(N, nb, s), out[3].reshape(nb, nb)

    def factor(self, vals) -> Inertia:
        vals = np.asarray(vals, dtype=float)
        self._K = sp.csr_matrix((vals, (self.rows, self.cols)), shape=(self.n, self.n))
        if self.dense:
            K = np.bincount(self._flat, weights=vals, minlength=self.n * self.n).astype(float)
            K = K.reshape(self.n, self.n)
            if self.use_numba:
                f = bk_factor(K)
                self._fac = ("dense-nb", f)
                inert = f[5:8]
            else:
                f = _lapack_factor(K)
                self._fac = ("dense-np", f)
                inert = f[2]
            return Inertia(*map(int, inert))
        A, C, G0, AB = self._assemble(vals)
        if self.use_numba:
            f = block_factor_nb(A, C, G0, AB)
            npos, nneg, nzer = f[-3:]
            self._fac = ("block-nb", f, C)
        else:
            facs, G, ef, npos, nneg, nzer = block_factor_np(A, C, G0, AB)
            self._fac = ("block-np", (facs, G, ef), C)
        return Inertia(int(npos) - self._pad, int(nneg), int(nzer))

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        kind = self._fac[0]
        if kind == "dense-nb":
            L, d1, d2, bs, perm = self._fac[1][:5]
            return bk_solve(L, d1, d2, bs, perm, rhs.reshape(-1, 1))[:, 0]
        if kind == "dense-np":
            return _lapack_solve(self._fac[1], rhs.reshape(-1, 1))[:, 0]
        r = np.zeros((self.N, self.s))
        r[self.stage[self._inner], self._local[self._inner]] = rhs[self._inner]
        rB = np.zeros(self.nb)
        rB[self._border_pos] = rhs[self._border]
        C = self._fac[2]
        if kind == "block-nb":
            Ls, D1, D2, BS, P, G, EL, ed1, ed2, ebs, eperm = self._fac[1][:11]
            x, xB = block_solve_nb(Ls, D1, D2, BS, P, C, G, EL, ed1, ed2, ebs, eperm, r, rB)
        else:
            facs, G, ef = self._fac[1]
            x, xB = block_solve_np(facs, C, G, ef, r, rB)
        out = np.empty(self.n)
        out[self._inner] = x[self.stage[self._inner], self._local[self._inner]]
        out[self._border] = xB[self._border_pos]
        return out

    def matvec(self, x) -> np.ndarray:
        return self._K @ x

    def solve_refined(self, rhs, tol: float = 1e-10, max_steps: int = 10):
        """Solve with iterative refinement; returns (x, relative residual)."""
        rhs = np.asarray(rhs, dtype=float)
        scale = max(np.abs(rhs).max(initial=0.0), 1e-300)
        x = self.solve(rhs)
        res = rhs - self.matvec(x)
        rel = np.abs(res).max(initial=0.0) / scale
        for _ in range(max_steps):
            if rel <= tol or not np.isfinite(rel):
                break
            x_new = x + self.solve(res)
            res_new = rhs - self.matvec(x_new)
            rel_new = np.abs(res_new).max(initial=0.0) / scale
            if not rel_new < rel:
                break
            x, res, rel = x_new, res_new, rel_new
        return x, rel
