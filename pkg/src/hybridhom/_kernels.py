"""Compiled inner loops over sorted int64 time arrays.

Lag ``d`` falls in bin ``k`` when ``k*w - w/2 <= d < k*w + w/2``; written in
integers as ``k = floor((2d + w) / (2w))`` so odd bin widths stay exact.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _bin_index(lag, width):
    return (2 * lag + width) // (2 * width)


@njit(cache=True, nogil=True)
def xcorr_counts(a, b, width, half_bins, same):
    """Histogram of ``b[j] - a[i]`` over bins ``-half_bins..half_bins``.

    ``same`` skips the diagonal ``i == j`` for autocorrelations.
    """
    counts = np.zeros(2 * half_bins + 1, dtype=np.int64)
    nb = b.size
    lo = 0
    for i in range(a.size):
        t = a[i]
        while lo < nb and _bin_index(b[lo] - t, width) < -half_bins:
            lo += 1
        j = lo
        while j < nb:
            k = _bin_index(b[j] - t, width)
            if k > half_bins:
                break
            if not (same and i == j):
                counts[k + half_bins] += 1
            j += 1
    return counts


@njit(cache=True, nogil=True)
def herald_mask(x, sync, window):
    """True where some sync tag lies within ``|t - s| <= window/2``."""
    out = np.zeros(x.size, dtype=np.bool_)
    ns = sync.size
    lo = 0
    for i in range(x.size):
        t = x[i]
        while lo < ns and 2 * (t - sync[lo]) > window:
            lo += 1
        if lo < ns and 2 * (sync[lo] - t) <= window:
            out[i] = True
    return out


@njit(cache=True, nogil=True)
def first_herald(x, sync, window):
    """Index of the earliest sync within the window of each x tag, or -1."""
    out = np.full(x.size, -1, dtype=np.int64)
    ns = sync.size
    lo = 0
    for i in range(x.size):
        t = x[i]
        while lo < ns and 2 * (t - sync[lo]) > window:
            lo += 1
        if lo < ns and 2 * (sync[lo] - t) <= window:
            out[i] = lo
    return out


@njit(cache=True, nogil=True)
def dead_time_keep(times, dead):
    """Keep mask enforcing a refractory period after each accepted tag."""
    keep = np.zeros(times.size, dtype=np.bool_)
    if times.size == 0:
        return keep
    keep[0] = True
    last = times[0]
    for i in range(1, times.size):
        if times[i] - last >= dead:
            keep[i] = True
            last = times[i]
    return keep


@njit(cache=True, nogil=True)
def _pair_candidates(a, b, window):
    nb = b.size
    total = 0
    lo = 0
    for i in range(a.size):
        while lo < nb and b[lo] < a[i] - window:
            lo += 1
        j = lo
        while j < nb and b[j] <= a[i] + window:
            total += 1
            j += 1
    ia = np.empty(total, dtype=np.int64)
    ib = np.empty(total, dtype=np.int64)
    sep = np.empty(total, dtype=np.int64)
    n = 0
    lo = 0
    for i in range(a.size):
        while lo < nb and b[lo] < a[i] - window:
            lo += 1
        j = lo
        while j < nb and b[j] <= a[i] + window:
            ia[n] = i
            ib[n] = j
            sep[n] = abs(b[j] - a[i])
            n += 1
            j += 1
    return ia, ib, sep


@njit(cache=True, nogil=True)
def greedy_pairs(a, b, window):
    """Pair a- and b-tags by ascending separation, each tag used at most once.

    Ties in separation are broken by a-index then b-index. Returns the
    partner b-index for every a-tag (-1 when unpaired).
    """
    ia, ib, sep = _pair_candidates(a, b, window)
    order = np.argsort(sep, kind="mergesort")
    partner_a = np.full(a.size, -1, dtype=np.int64)
    used_b = np.zeros(b.size, dtype=np.bool_)
    for n in order:
        i = ia[n]
        j = ib[n]
        if partner_a[i] < 0 and not used_b[j]:
            partner_a[i] = j
            used_b[j] = True
    return partner_a
