import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from levymalliavin import _kernels_py, kernels

try:
    compiled = importlib.import_module("levymalliavin._kernels")
except ImportError:  # extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _random_csr(rng, n, mean_jumps=5.0, horizon=1.0):
    counts = rng.poisson(mean_jumps, size=n)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    times = np.concatenate([np.sort(rng.random(c) * horizon) for c in counts]) if n else np.empty(0)
    sizes = rng.normal(0.0, 1.0, size=offsets[-1])
    return offsets, times.astype(float), sizes


def _bounds(intervals):
    lo = np.array([a for a, *_ in intervals], dtype=float)
    hi = np.array([b for _, b, *_ in intervals], dtype=float)
    lc = np.array([c for *_, c, _ in intervals], dtype=np.uint8)
    hc = np.array([d for *_, d in intervals], dtype=np.uint8)
    return lo, hi, lc, hc


BOXES = [
    (0.2, 0.8, [(-np.inf, -0.5, 0, 1), (0.5, np.inf, 1, 0)]),
    (0.0, 1.0, [(-0.25, 0.25, 0, 0)]),
    (0.5, 0.5, [(-np.inf, np.inf, 0, 0)]),
]


@needs_ext
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 40), t=st.floats(0, 1))
def test_jump_sums_backends_agree(seed, n, t):
    off, ts, xs = _random_csr(np.random.default_rng(seed), n)
    np.testing.assert_array_equal(compiled.jump_sums(off, ts, xs, t), _kernels_py.jump_sums(off, ts, xs, t))


@needs_ext
@pytest.mark.parametrize("s, t, ivs", BOXES)
@pytest.mark.parametrize("seed", range(5))
def test_box_sums_backends_agree(s, t, ivs, seed):
    off, ts, xs = _random_csr(np.random.default_rng(seed), 60)
    args = (off, ts, xs, s, t, *_bounds(ivs))
    np.testing.assert_array_equal(compiled.box_sums(*args), _kernels_py.box_sums(*args))


@needs_ext
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 30), drift=st.floats(-3, 3))
def test_sup_integral_backends_agree(seed, n, drift):
    off, ts, xs = _random_csr(np.random.default_rng(seed), n)
    a = compiled.sup_integral(off, ts, xs, drift, 1.0)
    b = _kernels_py.sup_integral(off, ts, xs, drift, 1.0)
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-13)
    np.testing.assert_allclose(a[1], b[1], rtol=0, atol=1e-13)


def _path(ts, xs, drift):
    def X(s):
        return drift * s + xs[ts <= s].sum()

    return X


@pytest.mark.parametrize("drift", [-1.3, 0.0, 0.8])
@pytest.mark.parametrize("seed", range(4))
def test_sup_integral_against_brute_force(drift, seed):
    off, ts, xs = _random_csr(np.random.default_rng(seed), 8)
    sup, area = kernels.sup_integral(off, ts, xs, drift, 1.0)
    for i in range(8):
        t_i, x_i = ts[off[i] : off[i + 1]], xs[off[i] : off[i + 1]]
        X = _path(t_i, x_i, drift)
        # left limits and values at every jump time plus both ends
        cands = [X(0.0), X(1.0)] + [X(t) for t in t_i] + [X(t) - x for t, x in zip(t_i, x_i)]
        assert sup[i] == pytest.approx(max(cands), abs=1e-13)
        ref, _ = integrate.quad(X, 0.0, 1.0, points=t_i if len(t_i) else None, limit=200, epsabs=1e-13)
        assert area[i] == pytest.approx(ref, abs=1e-10)


def test_box_sums_against_loop():
    off, ts, xs = _random_csr(np.random.default_rng(3), 50)
    s, t, ivs = BOXES[0]
    got = kernels.box_sums(off, ts, xs, s, t, [_Iv(*iv) for iv in ivs])
    for i in range(50):
        ref = 0.0
        for tj, xj in zip(ts[off[i] : off[i + 1]], xs[off[i] : off[i + 1]]):
            if s <= tj < t and (xj <= -0.5 or xj >= 0.5):
                ref += xj
        assert got[i] == pytest.approx(ref, abs=1e-14)


class _Iv:
    def __init__(self, lo, hi, lo_closed, hi_closed):
        self.lo, self.hi, self.lo_closed, self.hi_closed = lo, hi, bool(lo_closed), bool(hi_closed)


def _backend_in_subprocess(env_value):
    env = {k: v for k, v in os.environ.items() if k != "LEVYMALLIAVIN_PURE_PYTHON"}
    if env_value is not None:
        env["LEVYMALLIAVIN_PURE_PYTHON"] = env_value
    cmd = [sys.executable, "-c", "import levymalliavin.kernels as k; print(k.BACKEND)"]
    return subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout.strip()


def test_fallback_forced_by_env():
    assert _backend_in_subprocess("1") == "python"


@needs_ext
def test_extension_selected_by_default():
    assert _backend_in_subprocess(None) == "cython"
