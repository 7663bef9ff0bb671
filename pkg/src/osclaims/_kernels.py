"""Hot per-replicate loops with numba-compiled and pure-numpy variants.

Every kernel exists twice with identical floating-point semantics: the
numba versions loop over replicates (in parallel), the numpy versions
vectorize the same elementwise operations.  Bit-identical results across
backends and thread counts are guaranteed by keeping transcendentals
(exp, log, quantile transforms) out of the kernels: callers pass them in
precomputed, and the kernels use only add/multiply/divide, comparisons
and sorting.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly through the backend switch
    import numba as _numba
    from numba import njit, prange
except ImportError:  # pragma: no cover
    _numba = None

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range

HAVE_NUMBA = _numba is not None


# ---------------------------------------------------------------------------
# counts: inverse-transform Poisson given precomputed p0 = exp(-mu)
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def counts_numba(p0, mu, u, k_hard):  # pragma: no cover - numba path
    out = np.empty(len(mu), dtype=np.int64)
    for r in prange(len(mu)):
        p = p0[r]
        m = mu[r]
        cum = p
        n = 0
        while u[r] >= cum and n < k_hard:
            n += 1
            p = (p * m) / n
            cum = cum + p
        out[r] = n
    return out


def counts_numpy(p0, mu, u, k_hard):
    p = p0.copy()
    cum = p0.copy()
    out = np.zeros(len(mu), dtype=np.int64)
    idx = np.nonzero(u >= cum)[0]
    n = 0
    while idx.size and n < k_hard:
        n += 1
        p[idx] = (p[idx] * mu[idx]) / n
        cum[idx] = cum[idx] + p[idx]
        still = u[idx] >= cum[idx]
        out[idx[~still]] = n
        idx = idx[still]
    out[idx] = k_hard
    return out


# ---------------------------------------------------------------------------
# per-replicate ascending sort of the flat arrival array
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def sort_segments_numba(values, offsets):  # pragma: no cover - numba path
    out = values.copy()
    for r in prange(len(offsets) - 1):
        seg = out[offsets[r] : offsets[r + 1]]
        seg.sort()
    return out


def sort_segments_numpy(values, offsets, rep_ids):
    # stable two-key sort; equal arrival values make the tie order irrelevant
    order = np.lexsort((values, rep_ids))
    return values[order]


# ---------------------------------------------------------------------------
# gaps between consecutive arrivals (first gap measured from 0)
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def gaps_numba(times, offsets):  # pragma: no cover - numba path
    out = np.empty(len(times))
    for r in prange(len(offsets) - 1):
        lo, hi = offsets[r], offsets[r + 1]
        prev = 0.0
        for k in range(lo, hi):
            out[k] = times[k] - prev
            prev = times[k]
    return out


def gaps_numpy(times, offsets):
    out = times.copy()
    out[1:] = times[1:] - times[:-1]
    starts = offsets[:-1][offsets[:-1] < len(times)]
    out[starts] = times[starts]
    return out


# ---------------------------------------------------------------------------
# per-replicate totals (sequential left-to-right sums in both variants)
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def totals_numba(sizes, offsets):  # pragma: no cover - numba path
    out = np.zeros(len(offsets) - 1)
    for r in prange(len(offsets) - 1):
        acc = 0.0
        for k in range(offsets[r], offsets[r + 1]):
            acc += sizes[k]
        out[r] = acc
    return out


def totals_numpy(sizes, rep_ids, n_reps):
    # bincount accumulates in input order, matching the sequential loop
    return np.bincount(rep_ids, weights=sizes, minlength=n_reps)
