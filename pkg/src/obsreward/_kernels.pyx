# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must agree with ``_kernels_py`` (bit-exact for the RNG)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()

ctypedef unsigned long long u64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline u64 _mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def counter_uniforms(u64 seed, const cnp.uint64_t[::1] streams, Py_ssize_t n_slots):
    cdef Py_ssize_t n = streams.shape[0]
    out = np.empty((n, n_slots), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef u64 key, v
    cdef double scale = 1.0 / 9007199254740992.0  # 2**-53
    with nogil:
        for i in range(n):
            key = _mix64(seed ^ _mix64(<u64>streams[i] + GOLDEN))
            for j in range(n_slots):
                v = _mix64(key + (<u64>(j + 1)) * GOLDEN)
                o[i, j] = (<double>(v >> 11) + 0.5) * scale
    return out


def bt_loss_grad(const double[:, ::1] diffs, const double[::1] w, double lam):
    """Mean BT negative log-likelihood + lam*|w|^2 and its gradient."""
    cdef Py_ssize_t m = diffs.shape[0]
    cdef Py_ssize_t d = diffs.shape[1]
    grad = np.zeros(d, dtype=np.float64)
    cdef double[::1] g = grad
    cdef double loss = 0.0, z, coef, e
    cdef Py_ssize_t i, k
    with nogil:
        for i in range(m):
            z = 0.0
            for k in range(d):
                z = z + diffs[i, k] * w[k]
            # -log sigma(z) = log1p(exp(-z)), split for stability
            if z >= 0:
                e = exp(-z)
                loss = loss + log1p(e)
                coef = e / (1.0 + e)
            else:
                e = exp(z)
                loss = loss - z + log1p(e)
                coef = 1.0 / (1.0 + e)
            for k in range(d):
                g[k] = g[k] - coef * diffs[i, k]
        for k in range(d):
            g[k] = g[k] / m + 2.0 * lam * w[k]
        z = 0.0
        for k in range(d):
            z = z + w[k] * w[k]
    return loss / m + lam * z, grad
