# cython: language_level=3
"""Compiled versions of the hard-threshold, HELU, shrinkage and top-M kernels.

Semantics are defined by ``_kernels_py``; every function here must return
bitwise identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def hard_threshold(const double[:, ::1] u, const double[::1] theta):
    cdef Py_ssize_t n = u.shape[0], p = u.shape[1], i, j
    out_arr = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double v
    with nogil:
        for i in range(n):
            for j in range(p):
                v = u[i, j]
                out[i, j] = v if fabs(v) >= theta[j] else 0.0
    return out_arr


def helu_forward(const double[:, ::1] r, double sigma):
    cdef Py_ssize_t n = r.shape[0], p = r.shape[1], i, j
    cdef double knee = 1.0 - sigma
    cdef double width = 1.0 - knee
    cdef double v, a
    out_arr = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(p):
                v = r[i, j]
                a = fabs(v)
                if a >= 1.0:
                    out[i, j] = v
                elif v > knee:
                    out[i, j] = (v - knee) / width
                elif v < -knee:
                    out[i, j] = (v + knee) / width
                else:
                    out[i, j] = 0.0
    return out_arr


def helu_grad(const double[:, ::1] r, double sigma):
    cdef Py_ssize_t n = r.shape[0], p = r.shape[1], i, j
    cdef double knee = 1.0 - sigma
    cdef double width = 1.0 - knee
    cdef double slope = 1.0 / width
    cdef double a
    out_arr = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(p):
                a = fabs(r[i, j])
                if a >= 1.0:
                    out[i, j] = 1.0
                elif a > knee:
                    out[i, j] = slope
                else:
                    out[i, j] = 0.0
    return out_arr


def soft_shrink(const double[:, ::1] u, const double[::1] theta):
    cdef Py_ssize_t n = u.shape[0], p = u.shape[1], i, j
    cdef double v, s
    out_arr = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(p):
                v = u[i, j]
                s = fabs(v) - theta[j]
                if s != s:
                    out[i, j] = s  # NaN propagates, as in the NumPy version
                elif s > 0.0:
                    out[i, j] = s if v > 0.0 else -s
                elif v < 0.0:
                    out[i, j] = -0.0
                else:
                    out[i, j] = 0.0
    return out_arr


def topm_indices(const double[:, ::1] u, Py_ssize_t m):
    cdef Py_ssize_t n = u.shape[0], p = u.shape[1], i, j, k, cnt, t
    idx_arr = np.empty((n, m), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = idx_arr
    best_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] best = best_arr
    cdef double a
    cdef cnp.int64_t tmp
    with nogil:
        for i in range(n):
            cnt = 0
            for j in range(p):
                a = fabs(u[i, j])
                if cnt == m:
                    # strict: a later index never displaces an equal earlier one
                    if not a > best[m - 1]:
                        continue
                    k = m - 1
                else:
                    k = cnt
                    cnt += 1
                while k > 0 and a > best[k - 1]:
                    best[k] = best[k - 1]
                    idx[i, k] = idx[i, k - 1]
                    k -= 1
                best[k] = a
                idx[i, k] = j
            # canonical order: ascending switch index
            for k in range(1, m):
                tmp = idx[i, k]
                t = k
                while t > 0 and idx[i, t - 1] > tmp:
                    idx[i, t] = idx[i, t - 1]
                    t -= 1
                idx[i, t] = tmp
    return idx_arr
