"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled kernels are tested against. Attention kernels work on
a CSR layout grouped by receiving node: the messages into node ``u`` come
from ``src[ptr[u]:ptr[u+1]]``. Every segment must be non-empty (attention
graphs carry self loops).
"""

import numpy as np

_CHUNK = 1 << 16


def _dst(ptr):
    return np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))


def _heads(a, H):
    return a.reshape(a.shape[0], H, -1)


def attn_scores(q, k, ptr, src, H, scale):
    dst = _dst(ptr)
    qh, kh = _heads(q, H), _heads(k, H)
    out = np.empty((len(src), H))
    for s in range(0, len(src), _CHUNK):
        e = slice(s, s + _CHUNK)
        out[e] = np.einsum("ehj,ehj->eh", qh[dst[e]], kh[src[e]])
    return out * scale


def attn_scores_grad(gs, q, k, ptr, src, H, scale):
    dst = _dst(ptr)
    qh, kh = _heads(q, H), _heads(k, H)
    dq = np.zeros_like(qh)
    dk = np.zeros_like(kh)
    g = gs * scale
    for s in range(0, len(src), _CHUNK):
        e = slice(s, s + _CHUNK)
        ge = g[e][:, :, None]
        np.add.at(dq, dst[e], ge * kh[src[e]])
        np.add.at(dk, src[e], ge * qh[dst[e]])
    return dq.reshape(q.shape), dk.reshape(k.shape)


def segment_softmax(s, ptr):
    dst = _dst(ptr)
    starts = ptr[:-1]
    mx = np.maximum.reduceat(s, starts, axis=0)
    ex = np.exp(s - mx[dst])
    den = np.add.reduceat(ex, starts, axis=0)
    return ex / den[dst]


def segment_softmax_grad(a, ga, ptr):
    dst = _dst(ptr)
    dot = np.add.reduceat(a * ga, ptr[:-1], axis=0)
    return a * (ga - dot[dst])


def attn_aggregate(a, v, ptr, src):
    N = len(ptr) - 1
    H = a.shape[1]
    dst = _dst(ptr)
    vh = _heads(v, H)
    out = np.zeros((N, H, vh.shape[2]))
    for s in range(0, len(src), _CHUNK):
        e = slice(s, s + _CHUNK)
        np.add.at(out, dst[e], a[e][:, :, None] * vh[src[e]])
    return out.reshape(N, -1)


def attn_aggregate_grad(gout, a, v, ptr, src):
    H = a.shape[1]
    dst = _dst(ptr)
    vh = _heads(v, H)
    gh = _heads(gout, H)
    da = np.empty_like(a)
    dv = np.zeros_like(vh)
    for s in range(0, len(src), _CHUNK):
        e = slice(s, s + _CHUNK)
        g = gh[dst[e]]
        da[e] = np.einsum("ehj,ehj->eh", g, vh[src[e]])
        np.add.at(dv, src[e], a[e][:, :, None] * g)
    return da, dv.reshape(v.shape)


def scatter_add_rows(values, index, n):
    out = np.zeros((n,) + values.shape[1:])
    np.add.at(out, index, values)
    return out


def _local_energy(c, u, z, p, lam, nbr_ptr, nbr):
    xu = lam * c + p[u]
    e = 0.0
    for j in range(nbr_ptr[u], nbr_ptr[u + 1]):
        v = nbr[j]
        e += abs(xu - lam * z[v] - p[v])
    return e


def icm_sweep(z, p, lam, nbr_ptr, nbr, zmax):
    """One in-place ICM pass over all nodes; returns the number of changes.

    Each node moves to the best of {z-1, z, z+1} (clipped to +-zmax) only on a
    strict energy decrease; ties between the two moves go to z-1.
    """
    changes = 0
    for u in range(len(z)):
        c = z[u]
        best = _local_energy(c, u, z, p, lam, nbr_ptr, nbr)
        pick = c
        for cand in (c - 1, c + 1):
            if -zmax <= cand <= zmax:
                e = _local_energy(cand, u, z, p, lam, nbr_ptr, nbr)
                if e < best - 1e-12:
                    best, pick = e, cand
        if pick != c:
            z[u] = pick
            changes += 1
    return changes


def median_sweep(zr, p, lam, nbr_ptr, nbr):
    """One in-place Gauss-Seidel pass of the real-valued l1 relaxation.

    Each coordinate moves to the median of its neighbour-implied values
    ``zr[v] + (p[v] - p[u]) / lam``; for an even count the minimiser is an
    interval and the current value is clamped into it. Returns the largest
    absolute change.
    """
    biggest = 0.0
    for u in range(len(zr)):
        lo_i, hi_i = nbr_ptr[u], nbr_ptr[u + 1]
        m = hi_i - lo_i
        if m == 0:
            continue
        w = sorted(zr[nbr[j]] + (p[nbr[j]] - p[u]) / lam for j in range(lo_i, hi_i))
        if m % 2:
            new = w[m // 2]
        else:
            new = min(max(zr[u], w[m // 2 - 1]), w[m // 2])
        d = abs(new - zr[u])
        if d > biggest:
            biggest = d
        zr[u] = new
    return biggest
