# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the discrete L-functional.

Same contracts as :mod:`lgeom._kernels_py`; see that module for the maths.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def lagrangian(const double[::1] s, const double[:, ::1] X, const double[:, ::1] a,
               const double[:, :, ::1] da, const double[::1] R, const double[:, ::1] dR):
    cdef Py_ssize_t K = s.shape[0] - 1
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t k, j, m
    cdef double h, sm, v, kin, dkin, shared, total = 0.0
    grad_arr = np.zeros((K + 1, d), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double[16] vel
    if d > 16:
        raise ValueError("chart dimension above 16 is not supported")
    for k in range(K):
        h = s[k + 1] - s[k]
        sm = 0.5 * (s[k] + s[k + 1])
        kin = 0.0
        for j in range(d):
            v = (X[k + 1, j] - X[k, j]) / h
            vel[j] = v
            kin += a[k, j] * v * v
        total += h * (2.0 * sm * sm * R[k] + 0.5 * kin)
        for m in range(d):
            dkin = 0.0
            for j in range(d):
                dkin += da[k, j, m] * vel[j] * vel[j]
            shared = 0.5 * h * (2.0 * sm * sm * dR[k, m] + 0.5 * dkin)
            grad[k + 1, m] += a[k, m] * vel[m] + shared
            grad[k, m] += -a[k, m] * vel[m] + shared
    return total, grad_arr


def newton_direction(const double[::1] s, const double[:, ::1] a, const double[:, ::1] grad):
    cdef Py_ssize_t K = s.shape[0] - 1
    cdef Py_ssize_t d = a.shape[1]
    cdef Py_ssize_t n = K - 1
    cdef Py_ssize_t k, j
    cdef double wl, wr, denom
    out_arr = np.zeros((K + 1, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if n <= 0:
        return out_arr
    cprime_arr = np.empty(n, dtype=np.float64)
    dprime_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] cp = cprime_arr
    cdef double[::1] dp = dprime_arr
    for j in range(d):
        # Thomas sweep on the interior nodes 1..K-1
        for k in range(n):
            wl = a[k, j] / (s[k + 1] - s[k])
            wr = a[k + 1, j] / (s[k + 2] - s[k + 1])
            if k == 0:
                denom = wl + wr
                cp[k] = -wr / denom
                dp[k] = -grad[k + 1, j] / denom
            else:
                denom = wl + wr + wl * cp[k - 1]
                cp[k] = -wr / denom
                dp[k] = (-grad[k + 1, j] + wl * dp[k - 1]) / denom
        out[n, j] = dp[n - 1]
        for k in range(n - 2, -1, -1):
            out[k + 1, j] = dp[k] - cp[k] * out[k + 2, j]
    return out_arr
