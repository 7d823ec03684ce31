# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; signatures mirror graphunwrap._kernels_py."""

import numpy as np
from libc.math cimport exp, fabs
from libc.stdint cimport int64_t


def attn_scores(const double[:, ::1] q, const double[:, ::1] k,
                const int64_t[::1] ptr, const int64_t[::1] src, int H, double scale):
    cdef Py_ssize_t N = ptr.shape[0] - 1
    cdef Py_ssize_t dh = q.shape[1] // H
    out = np.empty((src.shape[0], H))
    cdef double[:, ::1] s = out
    cdef Py_ssize_t u, e, h, j, v, base
    cdef double acc
    with nogil:
        for u in range(N):
            for e in range(ptr[u], ptr[u + 1]):
                v = src[e]
                for h in range(H):
                    base = h * dh
                    acc = 0.0
                    for j in range(base, base + dh):
                        acc = acc + q[u, j] * k[v, j]
                    s[e, h] = acc * scale
    return out


def attn_scores_grad(const double[:, ::1] gs, const double[:, ::1] q, const double[:, ::1] k,
                     const int64_t[::1] ptr, const int64_t[::1] src, int H, double scale):
    cdef Py_ssize_t N = ptr.shape[0] - 1
    cdef Py_ssize_t dh = q.shape[1] // H
    dq_arr = np.zeros((q.shape[0], q.shape[1]))
    dk_arr = np.zeros((k.shape[0], k.shape[1]))
    cdef double[:, ::1] dq = dq_arr
    cdef double[:, ::1] dk = dk_arr
    cdef Py_ssize_t u, e, h, j, v, base
    cdef double g
    with nogil:
        for u in range(N):
            for e in range(ptr[u], ptr[u + 1]):
                v = src[e]
                for h in range(H):
                    g = gs[e, h] * scale
                    base = h * dh
                    for j in range(base, base + dh):
                        dq[u, j] += g * k[v, j]
                        dk[v, j] += g * q[u, j]
    return dq_arr, dk_arr


def segment_softmax(const double[:, ::1] s, const int64_t[::1] ptr):
    cdef Py_ssize_t N = ptr.shape[0] - 1
    cdef Py_ssize_t H = s.shape[1]
    out = np.empty((s.shape[0], H))
    cdef double[:, ::1] a = out
    cdef Py_ssize_t u, e, h
    cdef double mx, den
    with nogil:
        for u in range(N):
            for h in range(H):
                mx = s[ptr[u], h]
                for e in range(ptr[u] + 1, ptr[u + 1]):
                    if s[e, h] > mx:
                        mx = s[e, h]
                den = 0.0
                for e in range(ptr[u], ptr[u + 1]):
                    a[e, h] = exp(s[e, h] - mx)
                    den = den + a[e, h]
                for e in range(ptr[u], ptr[u + 1]):
                    a[e, h] = a[e, h] / den
    return out


def segment_softmax_grad(const double[:, ::1] a, const double[:, ::1] ga, const int64_t[::1] ptr):
    cdef Py_ssize_t N = ptr.shape[0] - 1
    cdef Py_ssize_t H = a.shape[1]
    out = np.empty((a.shape[0], H))
    cdef double[:, ::1] gs = out
    cdef Py_ssize_t u, e, h
    cdef double dot
    with nogil:
        for u in range(N):
            for h in range(H):
                dot = 0.0
                for e in range(ptr[u], ptr[u + 1]):
                    dot = dot + a[e, h] * ga[e, h]
                for e in range(ptr[u], ptr[u + 1]):
                    gs[e, h] = a[e, h] * (ga[e, h] - dot)
    return out


def attn_aggregate(const double[:, ::1] a, const double[:, ::1] v,
                   const int64_t[::1] ptr, const int64_t[::1] src):
    cdef Py_ssize_t N = ptr.shape[0] - 1
    cdef Py_ssize_t H = a.shape[1]
    cdef Py_ssize_t dh = v.shape[1] // H
    out_arr = np.zeros((N, v.shape[1]))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t u, e, h, j, w, base
    cdef double al
    with nogil:
        for u in range(N):
            for e in range(ptr[u], ptr[u + 1]):
                w = src[e]
                for h in range(H):
                    al = a[e, h]
                    base = h * dh
                    for j in range(base, base + dh):
                        out[u, j] += al * v[w, j]
    return out_arr


def attn_aggregate_grad(const double[:, ::1] gout, const double[:, ::1] a, const double[:, ::1] v,
                        const int64_t[::1] ptr, const int64_t[::1] src):
    cdef Py_ssize_t N = ptr.shape[0] - 1
    cdef Py_ssize_t H = a.shape[1]
    cdef Py_ssize_t dh = v.shape[1] // H
    da_arr = np.empty((a.shape[0], H))
    dv_arr = np.zeros((v.shape[0], v.shape[1]))
    cdef double[:, ::1] da = da_arr
    cdef double[:, ::1] dv = dv_arr
    cdef Py_ssize_t u, e, h, j, w, base
    cdef double acc, al
    with nogil:
        for u in range(N):
            for e in range(ptr[u], ptr[u + 1]):
                w = src[e]
                for h in range(H):
                    base = h * dh
                    al = a[e, h]
                    acc = 0.0
                    for j in range(base, base + dh):
                        acc = acc + gout[u, j] * v[w, j]
                        dv[w, j] += al * gout[u, j]
                    da[e, h] = acc
    return da_arr, dv_arr


def scatter_add_rows(values, index, Py_ssize_t n):
    vals = np.ascontiguousarray(values, dtype=np.float64)
    shape = vals.shape
    cdef double[:, ::1] vv = vals.reshape(shape[0], -1)
    cdef const int64_t[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    out_arr = np.zeros((n, vv.shape[1]))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, j, t
    with nogil:
        for r in range(vv.shape[0]):
            t = idx[r]
            for j in range(vv.shape[1]):
                out[t, j] += vv[r, j]
    return out_arr.reshape((n,) + shape[1:])


cdef inline double _local_energy(int64_t c, Py_ssize_t u, int64_t[::1] z, const double[::1] p,
                                 double lam, const int64_t[::1] nbr_ptr, const int64_t[::1] nbr) noexcept nogil:
    cdef double xu = lam * c + p[u]
    cdef double e = 0.0
    cdef Py_ssize_t j, v
    for j in range(nbr_ptr[u], nbr_ptr[u + 1]):
        v = nbr[j]
        e += fabs(xu - lam * z[v] - p[v])
    return e


def icm_sweep(int64_t[::1] z, const double[::1] p, double lam,
              const int64_t[::1] nbr_ptr, const int64_t[::1] nbr, int64_t zmax):
    cdef Py_ssize_t u
    cdef int64_t c, pick, cand
    cdef double best, e
    cdef int64_t changes = 0
    with nogil:
        for u in range(z.shape[0]):
            c = z[u]
            best = _local_energy(c, u, z, p, lam, nbr_ptr, nbr)
            pick = c
            cand = c - 1
            if cand >= -zmax:
                e = _local_energy(cand, u, z, p, lam, nbr_ptr, nbr)
                if e < best - 1e-12:
                    best = e
                    pick = cand
            cand = c + 1
            if cand <= zmax:
                e = _local_energy(cand, u, z, p, lam, nbr_ptr, nbr)
                if e < best - 1e-12:
                    best = e
                    pick = cand
            if pick != c:
                z[u] = pick
                changes += 1
    return changes


def median_sweep(double[::1] zr, const double[::1] p, double lam,
                 const int64_t[::1] nbr_ptr, const int64_t[::1] nbr):
    cdef Py_ssize_t n = zr.shape[0]
    cdef Py_ssize_t maxdeg = 0, u, j, m, a, b
    for u in range(n):
        if nbr_ptr[u + 1] - nbr_ptr[u] > maxdeg:
            maxdeg = nbr_ptr[u + 1] - nbr_ptr[u]
    buf_arr = np.empty(max(maxdeg, 1))
    cdef double[::1] w = buf_arr
    cdef double val, new, d, biggest = 0.0
    with nogil:
        for u in range(n):
            m = nbr_ptr[u + 1] - nbr_ptr[u]
            if m == 0:
                continue
            # insertion sort of neighbour-implied values
            for a in range(m):
                j = nbr[nbr_ptr[u] + a]
                val = zr[j] + (p[j] - p[u]) / lam
                b = a
                while b > 0 and w[b - 1] > val:
                    w[b] = w[b - 1]
                    b -= 1
                w[b] = val
            if m % 2 == 1:
                new = w[m // 2]
            else:
                new = zr[u]
                if new < w[m // 2 - 1]:
                    new = w[m // 2 - 1]
                if new > w[m // 2]:
                    new = w[m // 2]
            d = fabs(new - zr[u])
            if d > biggest:
                biggest = d
            zr[u] = new
    return biggest
