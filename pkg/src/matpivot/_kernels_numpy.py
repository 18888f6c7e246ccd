"""Pure-numpy kernel implementations.

Fallback path selected by setting MATPIVOT_NO_NUMBA=1; semantics match
``_kernels_numba`` (LAPACK SVD here instead of one-sided Jacobi there).
"""

import numpy as np

BACKEND = "numpy"

_NEG_INF = -np.inf


def svd_values(a):
    return np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)


def svd_values_batch(stack):
    return np.linalg.svd(np.asarray(stack, dtype=float), compute_uv=False)


def svd_full(a):
    u, s, vt = np.linalg.svd(np.asarray(a, dtype=float))
    return u, s, vt


def svd_full_batch(stack):
    u, s, vt = np.linalg.svd(np.asarray(stack, dtype=float))
    return u, s, vt


def _unit_rows(m):
    """Normalize rows to unit length; zero rows stay zero."""
    nrm = np.linalg.norm(m, axis=-1, keepdims=True)
    out = np.zeros_like(m)
    np.divide(m, nrm, out=out, where=nrm > 0)
    return out


def simulate_batch(letters, letlog, wletters, wletlog, x0, y0, v0, f0,
                   snap_idx, rank_tol):
    """Propagate right-products of a batch of letter sequences.

    letters: (T, n, d, d) unit-scale letters; letlog: (T, n) their log norms.
    wletters/wletlog: the same data for the wedge-square track (D = d(d-1)/2).
    Per step t the running products are rescaled to unit Frobenius norm; the
    accumulated log norm is carried separately so nothing over/underflows.

    Returns per-step arrays (leading axis T): exact log operator norms of
    both tracks, unit image vectors of x0/y0/v0, the normalized coefficient
    log |f g v| - log ||g||, log(||g v||/||g||), ranks, and Frobenius-unit
    snapshots of both tracks at ``snap_idx``.
    """
    letters = np.asarray(letters, dtype=float)
    T, n, d, _ = letters.shape
    D = wletters.shape[-1]
    G = len(snap_idx)
    snap_pos = {int(s): i for i, s in enumerate(snap_idx)}

    g1 = np.broadcast_to(np.eye(d), (T, d, d)).copy()
    g2 = np.broadcast_to(np.eye(D), (T, D, D)).copy()
    acc1 = np.zeros(T)
    acc2 = np.zeros(T)
    alive1 = np.ones(T, dtype=bool)
    alive2 = np.ones(T, dtype=bool)

    logn1 = np.full((T, n), _NEG_INF)
    logn2 = np.full((T, n), _NEG_INF)
    ux = np.zeros((T, n, d))
    uy = np.zeros((T, n, d))
    uv = np.zeros((T, n, d))
    logcoef = np.full((T, n), _NEG_INF)
    lognv = np.full((T, n), _NEG_INF)
    ranks = np.zeros((T, n), dtype=np.int64)
    snaps1 = np.zeros((T, G, d, d))
    snaps2 = np.zeros((T, G, D, D))

    for t in range(n):
        g1 = np.einsum("tij,tjk->tik", g1, letters[:, t])
        g2 = np.einsum("tij,tjk->tik", g2, wletters[:, t])
        f1 = np.linalg.norm(g1, axis=(1, 2))
        f2 = np.linalg.norm(g2, axis=(1, 2))
        alive1 &= f1 > 0
        alive2 &= f2 > 0
        acc1 = np.where(alive1, acc1 + np.log(np.where(alive1, f1, 1.0))
                        + letlog[:, t], _NEG_INF)
        acc2 = np.where(alive2, acc2 + np.log(np.where(alive2, f2, 1.0))
                        + wletlog[:, t], _NEG_INF)
        g1 = np.where(alive1[:, None, None], g1 / np.where(f1 > 0, f1, 1.0)[:, None, None], 0.0)
        g2 = np.where(alive2[:, None, None], g2 / np.where(f2 > 0, f2, 1.0)[:, None, None], 0.0)

        s = np.linalg.svd(g1, compute_uv=False)
        s1 = s[:, 0]
        with np.errstate(divide="ignore"):
            logn1[:, t] = np.where(alive1 & (s1 > 0), acc1 + np.log(np.where(s1 > 0, s1, 1.0)), _NEG_INF)
        s2w = np.linalg.svd(g2, compute_uv=False)[:, 0]
        with np.errstate(divide="ignore"):
            logn2[:, t] = np.where(alive2 & (s2w > 0), acc2 + np.log(np.where(s2w > 0, s2w, 1.0)), _NEG_INF)
        if d == 2:
            # exact: the wedge track dies exactly when the rank drops
            ranks[:, t] = np.where(alive1, np.where(alive2, 2, 1), 0)
        else:
            ranks[:, t] = np.where(alive1,
                                   (s > rank_tol * s1[:, None]).sum(axis=1),
                                   0)

        ix = np.einsum("tij,j->ti", g1, x0)
        iy = np.einsum("tij,j->ti", g1, y0)
        iv = np.einsum("tij,j->ti", g1, v0)
        ux[:, t] = _unit_rows(ix)
        uy[:, t] = _unit_rows(iy)
        uv[:, t] = _unit_rows(iv)
        nv = np.linalg.norm(iv, axis=1)
        cf = np.abs(np.einsum("i,ti->t", f0, iv))
        ok = alive1 & (s1 > 0)
        with np.errstate(divide="ignore"):
            lognv[:, t] = np.where(ok & (nv > 0), np.log(np.where(nv > 0, nv, 1.0)) - np.log(np.where(s1 > 0, s1, 1.0)), _NEG_INF)
            logcoef[:, t] = np.where(ok & (cf > 0), np.log(np.where(cf > 0, cf, 1.0)) - np.log(np.where(s1 > 0, s1, 1.0)), _NEG_INF)

        if t in snap_pos:
            i = snap_pos[t]
            snaps1[:, i] = g1
            snaps2[:, i] = g2

    return logn1, logn2, ux, uy, uv, logcoef, lognv, ranks, snaps1, snaps2
