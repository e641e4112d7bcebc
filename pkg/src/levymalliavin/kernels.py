"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``LEVYMALLIAVIN_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LEVYMALLIAVIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _prep(offsets, times, sizes):
    return (
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(sizes, dtype=np.float64),
    )


def jump_sums(offsets, times, sizes, t):
    return _impl.jump_sums(*_prep(offsets, times, sizes), float(t))


def box_sums(offsets, times, sizes, s, t, intervals):
    lo = np.array([iv.lo for iv in intervals], dtype=float)
    hi = np.array([iv.hi for iv in intervals], dtype=float)
    lc = np.array([iv.lo_closed for iv in intervals], dtype=np.uint8)
    hc = np.array([iv.hi_closed for iv in intervals], dtype=np.uint8)
    return _impl.box_sums(*_prep(offsets, times, sizes), float(s), float(t), lo, hi, lc, hc)


def sup_integral(offsets, times, sizes, drift, horizon):
    return _impl.sup_integral(*_prep(offsets, times, sizes), float(drift), float(horizon))
