"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorized numpy version.  The public names at the bottom of the module are
bound to one or the other at import time (see :mod:`qdtomo._accel`).  Both
variants are exported with ``_numba``/``_numpy`` suffixes so tests and the
benchmark can compare them directly.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "project_simplex_rows",
    "subset_power_sums",
    "scaled_laguerre_series",
    "BACKEND",
]


# --------------------------------------------------------------------------
# Euclidean projection of each row onto the probability simplex
# --------------------------------------------------------------------------

def project_simplex_rows_numpy(v):
    """Project every row of ``v`` onto ``{x >= 0, sum(x) = 1}``."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[1]
    # stable sort keeps ties in outcome order
    order = np.argsort(-v, axis=1, kind="stable")
    u = np.take_along_axis(v, order, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1, dtype=np.float64)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(v.shape[0]), rho] / (rho + 1.0)
    return np.maximum(v - tau[:, None], 0.0)


@njit
def project_simplex_rows_numba(v):
    rows, n = v.shape
    out = np.empty_like(v)
    for i in range(rows):
        order = np.argsort(-v[i], kind="mergesort")
        css = 0.0
        tau = 0.0
        for j in range(n):
            css += v[i, order[j]]
            t = (css - 1.0) / (j + 1.0)
            if v[i, order[j]] - t > 0.0:
                tau = t
        for j in range(n):
            x = v[i, j] - tau
            out[i, j] = x if x > 0.0 else 0.0
    return out


# --------------------------------------------------------------------------
# Power sums of subset masses, grouped by subset size
# --------------------------------------------------------------------------

def _subset_masses(bins):
    b = len(bins)
    masks = np.arange(1 << b)
    bits = (masks[:, None] >> np.arange(b)) & 1
    return bits @ bins, bits.sum(axis=1)


def subset_power_sums_numpy(bins, qmax):
    """``e[q, m] = sum over subsets T with |T| = m of (sum_{b in T} p_b)**q``."""
    bins = np.asarray(bins, dtype=np.float64)
    mass, size = _subset_masses(bins)
    q = np.arange(qmax + 1)
    with np.errstate(divide="ignore"):
        powers = mass[None, :] ** q[:, None]
    out = np.zeros((qmax + 1, len(bins) + 1))
    for m in range(len(bins) + 1):
        out[:, m] = powers[:, size == m].sum(axis=1)
    return out


@njit
def subset_power_sums_numba(bins, qmax):
    b = bins.shape[0]
    out = np.zeros((qmax + 1, b + 1))
    for mask in range(1 << b):
        mass = 0.0
        size = 0
        for j in range(b):
            if (mask >> j) & 1:
                mass += bins[j]
                size += 1
        p = 1.0
        for q in range(qmax + 1):
            out[q, size] += p
            p *= mass
    return out


# --------------------------------------------------------------------------
# sum_k c_k exp(-x/2) L_k(x), Laguerre polynomials by upward recurrence
# --------------------------------------------------------------------------

def scaled_laguerre_series_numpy(coeffs, x):
    """Evaluate ``sum_k coeffs[k] * exp(-x/2) * L_k(x)`` at every ``x``."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    prev = np.exp(-0.5 * x)
    total = coeffs[0] * prev
    if len(coeffs) == 1:
        return total
    cur = (1.0 - x) * prev
    total = total + coeffs[1] * cur
    for k in range(1, len(coeffs) - 1):
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        total = total + coeffs[k + 1] * cur
    return total


@njit
def scaled_laguerre_series_numba(coeffs, x):
    # k outer, points inner: the point loop has no carried dependency
    flat = x.ravel()
    n = flat.shape[0]
    kmax = coeffs.shape[0]
    prev = np.empty(n)
    cur = np.empty(n)
    total = np.empty(n)
    for i in range(n):
        prev[i] = np.exp(-0.5 * flat[i])
        total[i] = coeffs[0] * prev[i]
    if kmax > 1:
        for i in range(n):
            cur[i] = (1.0 - flat[i]) * prev[i]
            total[i] += coeffs[1] * cur[i]
        for k in range(1, kmax - 1):
            inv = 1.0 / (k + 1)
            c = coeffs[k + 1]
            for i in range(n):
                nxt = ((2 * k + 1 - flat[i]) * cur[i] - k * prev[i]) * inv
                prev[i] = cur[i]
                cur[i] = nxt
                total[i] += c * nxt
    return total.reshape(x.shape)


if USE_NUMBA:
    BACKEND = "numba"

    def project_simplex_rows(v):
        return project_simplex_rows_numba(np.ascontiguousarray(v, dtype=np.float64))

    def subset_power_sums(bins, qmax):
        return subset_power_sums_numba(np.ascontiguousarray(bins, dtype=np.float64), int(qmax))

    def scaled_laguerre_series(coeffs, x):
        return scaled_laguerre_series_numba(
            np.ascontiguousarray(coeffs, dtype=np.float64),
            np.ascontiguousarray(x, dtype=np.float64),
        )
else:
    BACKEND = "numpy"
    project_simplex_rows = project_simplex_rows_numpy
    subset_power_sums = subset_power_sums_numpy
    scaled_laguerre_series = scaled_laguerre_series_numpy
