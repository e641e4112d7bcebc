"""Reference implementations of the Monte Carlo kernels (numpy / pure Python).

Used when the compiled extension is missing.  All routines take a batch in
CSR layout: the jumps of sample ``i`` live in ``[offsets[i], offsets[i+1])``.
"""

import numpy as np


def _sample_ids(offsets):
    return np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))


def jump_sums(offsets, times, sizes, t):
    """Per sample, the sum of jump sizes with jump time <= t."""
    n = len(offsets) - 1
    w = np.where(times <= t, sizes, 0.0)
    return np.bincount(_sample_ids(offsets), weights=w, minlength=n).astype(float)


def box_sums(offsets, times, sizes, s, t, lo, hi, lo_closed, hi_closed):
    """Per sample, the sum of sizes of jumps in ``[s, t) x A`` (A a union of intervals)."""
    n = len(offsets) - 1
    in_a = np.zeros(len(sizes), dtype=bool)
    for a, b, ac, bc in zip(lo, hi, lo_closed, hi_closed):
        above = sizes >= a if ac else sizes > a
        below = sizes <= b if bc else sizes < b
        in_a |= above & below
    sel = in_a & (times >= s) & (times < t)
    w = np.where(sel, sizes, 0.0)
    return np.bincount(_sample_ids(offsets), weights=w, minlength=n).astype(float)


def sup_integral(offsets, times, sizes, drift, horizon):
    """Exact running supremum and time integral of ``drift*s + J(s)`` on [0, horizon].

    ``times`` must be sorted within each sample.
    """
    n = len(offsets) - 1
    sup = np.empty(n)
    integral = np.empty(n)
    times = times.tolist()
    sizes = sizes.tolist()
    offsets = offsets.tolist()
    for i in range(n):
        k, end = offsets[i], offsets[i + 1]
        J = 0.0
        while k < end and times[k] <= 0.0:
            J += sizes[k]
            k += 1
        best = J
        area = 0.0
        prev = 0.0
        while k < end and times[k] <= horizon:
            tau = times[k]
            area += drift * (tau * tau - prev * prev) * 0.5 + J * (tau - prev)
            left = drift * tau + J
            if left > best:
                best = left
            J += sizes[k]
            right = drift * tau + J
            if right > best:
                best = right
            prev = tau
            k += 1
        area += drift * (horizon * horizon - prev * prev) * 0.5 + J * (horizon - prev)
        end_val = drift * horizon + J
        if end_val > best:
            best = end_val
        sup[i] = best
        integral[i] = area
    return sup, integral
