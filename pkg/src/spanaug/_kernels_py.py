"""NumPy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def _clipped_sum(v, mu):
    return np.clip(v - mu, 0.0, 1.0).sum()


def project_upper(v, budget, tol=1e-10, max_iter=200):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if budget <= 0.0 or v.size == 0:
        return np.zeros_like(v)
    clipped = np.clip(v, 0.0, 1.0)
    if 2.0 * clipped.sum() - budget <= 1e-13 * max(budget, 1.0):
        return clipped
    half = 0.5 * budget
    lo, hi = 0.0, float(v.max())
    for _ in range(max_iter):
        if 2.0 * (half - _clipped_sum(v, hi)) <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _clipped_sum(v, mid) > half:
            lo = mid
        else:
            hi = mid
    return np.clip(v - hi, 0.0, 1.0)


def flip_sample(adjacency, delta, uniforms):
    n = adjacency.shape[0]
    iu = np.triu_indices(n, 1)
    upper = adjacency[iu]
    flips = uniforms < delta[iu]
    upper = np.where(flips, 1.0 - upper, upper)
    out = np.zeros((n, n), dtype=np.float64)
    out[iu] = upper
    return out + out.T
