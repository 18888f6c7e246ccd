"""Numba kernels for the hot loops: small-matrix Jacobi SVD and trajectory
propagation.  The numpy twin lives in ``_kernels_numpy``."""

import numpy as np
from numba import njit

BACKEND = "numba"

_JIT_OPTS = dict(cache=True, nogil=True, fastmath=False)

_NEG_INF = -np.inf


@njit(**_JIT_OPTS)
def _jacobi_core(w, v, want_v):
    """One-sided Jacobi on the columns of w (in place).

    Sweeps until the off-diagonal Frobenius mass of w^T w drops below
    1e-14 relative to ||w||_F^2.  v accumulates the right rotations.
    """
    d = w.shape[1]
    for _sweep in range(60):
        off2 = 0.0
        frob2 = 0.0
        for p in range(d):
            s = 0.0
            for i in range(d):
                s += w[i, p] * w[i, p]
            frob2 += s
        if frob2 == 0.0:
            return
        for p in range(d - 1):
            for q in range(p + 1, d):
                app = 0.0
                aqq = 0.0
                apq = 0.0
                for i in range(d):
                    app += w[i, p] * w[i, p]
                    aqq += w[i, q] * w[i, q]
                    apq += w[i, p] * w[i, q]
                off2 += apq * apq
                if app == 0.0 or aqq == 0.0:
                    continue
                if abs(apq) <= 1e-16 * np.sqrt(app * aqq):
                    continue
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s_ = c * t
                for i in range(d):
                    wp = w[i, p]
                    wq = w[i, q]
                    w[i, p] = c * wp - s_ * wq
                    w[i, q] = s_ * wp + c * wq
                if want_v:
                    for i in range(d):
                        vp = v[i, p]
                        vq = v[i, q]
                        v[i, p] = c * vp - s_ * vq
                        v[i, q] = s_ * vp + c * vq
        if np.sqrt(2.0 * off2) <= 1e-14 * frob2:
            return


@njit(**_JIT_OPTS)
def _svd_values(a):
    d = a.shape[0]
    w = a.copy()
    v = np.empty((0, 0))
    _jacobi_core(w, v, False)
    s = np.empty(d)
    for j in range(d):
        acc = 0.0
        for i in range(d):
            acc += w[i, j] * w[i, j]
        s[j] = np.sqrt(acc)
    # insertion sort, descending
    for j in range(1, d):
        key = s[j]
        i = j - 1
        while i >= 0 and s[i] < key:
            s[i + 1] = s[i]
            i -= 1
        s[i + 1] = key
    return s


@njit(**_JIT_OPTS)
def _svd_full(a):
    d = a.shape[0]
    w = a.copy()
    v = np.eye(d)
    _jacobi_core(w, v, True)
    s = np.empty(d)
    for j in range(d):
        acc = 0.0
        for i in range(d):
            acc += w[i, j] * w[i, j]
        s[j] = np.sqrt(acc)
    order = np.argsort(-s)
    s_sorted = np.empty(d)
    u = np.zeros((d, d))
    vt = np.zeros((d, d))
    for jj in range(d):
        j = order[jj]
        s_sorted[jj] = s[j]
        if s[j] > 0.0:
            for i in range(d):
                u[i, jj] = w[i, j] / s[j]
        else:
            u[jj, jj] = 1.0
        for i in range(d):
            vt[jj, i] = v[i, j]
    return u, s_sorted, vt


@njit(**_JIT_OPTS)
def _svd_values_batch(stack):
    m = stack.shape[0]
    d = stack.shape[1]
    out = np.empty((m, d))
    for k in range(m):
        out[k] = _svd_values(stack[k])
    return out


@njit(**_JIT_OPTS)
def _svd_full_batch(stack):
    m = stack.shape[0]
    d = stack.shape[1]
    us = np.empty((m, d, d))
    ss = np.empty((m, d))
    vts = np.empty((m, d, d))
    for k in range(m):
        u, s, vt = _svd_full(stack[k])
        us[k] = u
        ss[k] = s
        vts[k] = vt
    return us, ss, vts


def svd_values(a):
    return _svd_values(np.ascontiguousarray(a, dtype=np.float64))


def svd_values_batch(stack):
    return _svd_values_batch(np.ascontiguousarray(stack, dtype=np.float64))


def svd_full(a):
    return _svd_full(np.ascontiguousarray(a, dtype=np.float64))


def svd_full_batch(stack):
    return _svd_full_batch(np.ascontiguousarray(stack, dtype=np.float64))


@njit(**_JIT_OPTS)
def _matmul(a, b, out):
    n = a.shape[0]
    m = b.shape[1]
    k = a.shape[1]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for l in range(k):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc


@njit(**_JIT_OPTS)
def _simulate_one(letters, letlog, wletters, wletlog, x0, y0, v0, f0,
                  snap_idx, rank_tol,
                  logn1, logn2, ux, uy, uv, logcoef, lognv, ranks,
                  snaps1, snaps2):
    n = letters.shape[0]
    d = letters.shape[1]
    D = wletters.shape[1]
    g1 = np.eye(d)
    g2 = np.eye(D)
    t1 = np.empty((d, d))
    t2 = np.empty((D, D))
    acc1 = 0.0
    acc2 = 0.0
    alive1 = True
    alive2 = True
    si = 0
    for t in range(n):
        _matmul(g1, letters[t], t1)
        _matmul(g2, wletters[t], t2)
        g1[:, :] = t1
        g2[:, :] = t2
        f1 = 0.0
        f2 = 0.0
        for i in range(d):
            for j in range(d):
                f1 += g1[i, j] * g1[i, j]
        for i in range(D):
            for j in range(D):
                f2 += g2[i, j] * g2[i, j]
        f1 = np.sqrt(f1)
        f2 = np.sqrt(f2)
        if f1 == 0.0:
            alive1 = False
        if f2 == 0.0:
            alive2 = False
        if alive1:
            acc1 += np.log(f1) + letlog[t]
            for i in range(d):
                for j in range(d):
                    g1[i, j] /= f1
        else:
            g1[:, :] = 0.0
        if alive2:
            acc2 += np.log(f2) + wletlog[t]
            for i in range(D):
                for j in range(D):
                    g2[i, j] /= f2
        else:
            g2[:, :] = 0.0

        if alive1:
            s = _svd_values(g1)
            s1 = s[0]
            logn1[t] = acc1 + np.log(s1)
            if d == 2:
                # exact: the wedge track dies exactly when the rank drops
                ranks[t] = 2 if alive2 else 1
            else:
                r = 0
                for i in range(d):
                    if s[i] > rank_tol * s1:
                        r += 1
                ranks[t] = r
        else:
            logn1[t] = _NEG_INF
            ranks[t] = 0
            s1 = 0.0
        if alive2:
            sw = _svd_values(g2)
            logn2[t] = acc2 + np.log(sw[0])
        else:
            logn2[t] = _NEG_INF

        nx = 0.0
        ny = 0.0
        nv = 0.0
        cf = 0.0
        for i in range(d):
            axi = 0.0
            ayi = 0.0
            avi = 0.0
            for j in range(d):
                axi += g1[i, j] * x0[j]
                ayi += g1[i, j] * y0[j]
                avi += g1[i, j] * v0[j]
            ux[t, i] = axi
            uy[t, i] = ayi
            uv[t, i] = avi
            nx += axi * axi
            ny += ayi * ayi
            nv += avi * avi
            cf += f0[i] * avi
        nx = np.sqrt(nx)
        ny = np.sqrt(ny)
        nv = np.sqrt(nv)
        cf = abs(cf)
        for i in range(d):
            ux[t, i] = ux[t, i] / nx if nx > 0.0 else 0.0
            uy[t, i] = uy[t, i] / ny if ny > 0.0 else 0.0
            uv[t, i] = uv[t, i] / nv if nv > 0.0 else 0.0
        if alive1 and s1 > 0.0 and nv > 0.0:
            lognv[t] = np.log(nv) - np.log(s1)
        else:
            lognv[t] = _NEG_INF
        if alive1 and s1 > 0.0 and cf > 0.0:
            logcoef[t] = np.log(cf) - np.log(s1)
        else:
            logcoef[t] = _NEG_INF

        if si < snap_idx.shape[0] and t == snap_idx[si]:
            snaps1[si] = g1
            snaps2[si] = g2
            si += 1


def simulate_batch(letters, letlog, wletters, wletlog, x0, y0, v0, f0,
                   snap_idx, rank_tol):
    """Same contract as the numpy twin; loops trajectories through the
    scalar njit kernel."""
    letters = np.ascontiguousarray(letters, dtype=np.float64)
    wletters = np.ascontiguousarray(wletters, dtype=np.float64)
    letlog = np.ascontiguousarray(letlog, dtype=np.float64)
    wletlog = np.ascontiguousarray(wletlog, dtype=np.float64)
    snap_idx = np.ascontiguousarray(snap_idx, dtype=np.int64)
    T, n, d, _ = letters.shape
    D = wletters.shape[-1]
    G = len(snap_idx)
    logn1 = np.empty((T, n))
    logn2 = np.empty((T, n))
    ux = np.zeros((T, n, d))
    uy = np.zeros((T, n, d))
    uv = np.zeros((T, n, d))
    logcoef = np.empty((T, n))
    lognv = np.empty((T, n))
    ranks = np.zeros((T, n), dtype=np.int64)
    snaps1 = np.zeros((T, G, d, d))
    snaps2 = np.zeros((T, G, D, D))
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    f0 = np.ascontiguousarray(f0, dtype=np.float64)
    for k in range(T):
        _simulate_one(letters[k], letlog[k], wletters[k], wletlog[k],
                      x0, y0, v0, f0, snap_idx, rank_tol,
                      logn1[k], logn2[k], ux[k], uy[k], uv[k],
                      logcoef[k], lognv[k], ranks[k], snaps1[k], snaps2[k])
    return logn1, logn2, ux, uy, uv, logcoef, lognv, ranks, snaps1, snaps2
