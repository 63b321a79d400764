# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics must match ``spanaug._kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _clipped_sum(const double[::1] v, double mu) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0, x
    for i in range(v.shape[0]):
        x = v[i] - mu
        if x > 1.0:
            s += 1.0
        elif x > 0.0:
            s += x
    return s


def project_upper(const double[::1] v, double budget, double tol=1e-10, int max_iter=200):
    """Project upper-triangle values onto the box [0,1] intersected with the L1 ball.

    ``budget`` is the full-matrix L1 radius; each upper-triangle value is
    mirrored, so it is counted twice.
    """
    cdef Py_ssize_t i, m = v.shape[0]
    cdef double half = 0.5 * budget
    cdef double lo = 0.0, hi = 0.0, mid, s, x
    cdef int it
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    if budget <= 0.0 or m == 0:
        out[:] = 0.0
        return out
    s = _clipped_sum(v, 0.0)
    # points on the boundary may overshoot by rounding alone; leave those alone
    if 2.0 * s - budget <= 1e-13 * (budget if budget > 1.0 else 1.0):
        for i in range(m):
            x = v[i]
            o[i] = 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)
        return out
    for i in range(m):
        if v[i] > hi:
            hi = v[i]
    with nogil:
        for it in range(max_iter):
            if 2.0 * (half - _clipped_sum(v, hi)) <= tol:
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _clipped_sum(v, mid) > half:
                lo = mid
            else:
                hi = mid
        for i in range(m):
            x = v[i] - hi
            o[i] = 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)
    return out


def flip_sample(const double[:, ::1] adjacency, const double[:, ::1] delta,
                const double[::1] uniforms):
    """Apply Bernoulli edge flips; ``uniforms`` is ordered like ``np.triu_indices(n, 1)``."""
    cdef Py_ssize_t n = adjacency.shape[0]
    cdef Py_ssize_t i, j, k = 0
    cdef double a
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                a = adjacency[i, j]
                if uniforms[k] < delta[i, j]:
                    a = 1.0 - a
                o[i, j] = a
                o[j, i] = a
                k += 1
    return out
