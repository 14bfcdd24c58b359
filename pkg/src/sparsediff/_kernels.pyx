# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled diffusion simulation kernel; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite, NAN

cnp.import_array()


cdef inline double _attract(double w, int attractor, double eps) noexcept nogil:
    cdef double s
    if w > 0.0:
        s = 1.0
    elif w < 0.0:
        s = -1.0
    else:
        return 0.0
    if attractor == 1:
        return s
    return s / (1.0 + eps * fabs(w))


cdef void _adapt(double[:, ::1] base, double[:, ::1] out, const double[:, :] x, const double[:] dk,
                 Py_ssize_t i, Py_ssize_t N, Py_ssize_t M, double mu, double leak,
                 double rho, double eps, int attractor, bint use_attractor) noexcept nogil:
    cdef Py_ssize_t k, m
    cdef double y, e
    for k in range(N):
        y = 0.0
        for m in range(M):
            y += x[k, i + M - 1 - m] * base[k, m]
        e = mu * (dk[k] - y)
        for m in range(M):
            out[k, m] = leak * base[k, m] + e * x[k, i + M - 1 - m]
            if use_attractor:
                out[k, m] = out[k, m] - rho * _attract(base[k, m], attractor, eps)


cdef void _combine(double[:, ::1] src, double[:, ::1] out, const long long[:] indptr,
                   const long long[:] indices, const double[:] weights,
                   Py_ssize_t N, Py_ssize_t M) noexcept nogil:
    cdef Py_ssize_t k, m, j, l
    cdef double a
    for k in range(N):
        j = indptr[k]
        l = indices[j]
        a = weights[j]
        for m in range(M):
            out[k, m] = a * src[l, m]
        for j in range(indptr[k] + 1, indptr[k + 1]):
            l = indices[j]
            a = weights[j]
            for m in range(M):
                out[k, m] = out[k, m] + a * src[l, m]


def simulate_batch(x_pad, d, indptr, indices, weights, wo_table, stage_of,
                   double mu, double gamma, double rho, double eps, int attractor, bint cta,
                   history=None):
    cdef const double[:, :, :] xv = np.ascontiguousarray(x_pad, dtype=np.float64)
    cdef const double[:, :, :] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const long long[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[:] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:] wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:, :] wo = np.ascontiguousarray(wo_table, dtype=np.float64)
    cdef const long long[:] st = np.ascontiguousarray(stage_of, dtype=np.int64)

    cdef Py_ssize_t B = dv.shape[0], N = dv.shape[1], T = dv.shape[2], M = wo.shape[1]
    cdef double leak = 1.0 - mu * gamma
    cdef bint use_attractor = attractor != 0 and rho != 0.0
    cdef bint keep = history is not None
    cdef double[:, :, :, ::1] hv
    if keep:
        hv = history
    else:
        hv = np.empty((1, 1, 1, 1))

    msd_arr = np.empty((B, T))
    w_arr = np.zeros((B, N, M))
    div_arr = np.full(B, -1, dtype=np.int64)
    cdef double[:, ::1] msd = msd_arr
    cdef double[:, :, ::1] wout = w_arr
    cdef long long[:] div = div_arr
    cdef double[:, ::1] w = np.zeros((N, M))
    cdef double[:, ::1] tmp = np.zeros((N, M))
    cdef Py_ssize_t b, i, k, m, s
    cdef double acc, dev

    with nogil:
        for b in range(B):
            w[:, :] = 0.0
            for i in range(T):
                if cta:
                    _combine(w, tmp, ip, ix, wt, N, M)
                    _adapt(tmp, w, xv[b], dv[b, :, i], i, N, M, mu, leak, rho, eps, attractor, use_attractor)
                else:
                    _adapt(w, tmp, xv[b], dv[b, :, i], i, N, M, mu, leak, rho, eps, attractor, use_attractor)
                    _combine(tmp, w, ip, ix, wt, N, M)
                s = st[i]
                acc = 0.0
                for k in range(N):
                    for m in range(M):
                        dev = wo[s, m] - w[k, m]
                        acc = acc + dev * dev
                acc = acc / N
                if keep:
                    hv[b, i, :, :] = w
                if not isfinite(acc):
                    div[b] = i
                    for k in range(i, T):
                        msd[b, k] = NAN
                    break
                msd[b, i] = acc
            wout[b, :, :] = w
    return msd_arr, w_arr, div_arr
