"""Compiled vs numpy kernels on a realistic jump batch.

    python3 benchmarks/bench_kernels.py --samples 20000 --repeat 5
"""

import argparse
import timeit

import numpy as np

from levymalliavin import _kernels_py
from levymalliavin.canonical_path import CanonicalSampler
from levymalliavin.levy_model import LevyTriplet, TruncatedStable, build_partition

try:
    from levymalliavin import _kernels as _compiled
except ImportError:
    _compiled = None


def make_batch(n_samples, seed):
    nu = TruncatedStable(0.8, 1.0, 0.0, 3.0)
    tr = LevyTriplet(0.1, 0.0, nu)
    p = build_partition(nu, 6, 0.01)
    batch = CanonicalSampler(tr, p, 1.0).sample(np.random.SeedSequence(seed), n_samples)
    times, sizes = batch.time_sorted
    return batch.offsets, np.ascontiguousarray(times), np.ascontiguousarray(sizes), tr.gamma - p.compensator


def cases(offsets, times, sizes, drift):
    lo = np.array([-1.0, 0.1])
    hi = np.array([-0.05, 2.0])
    lc = np.array([1, 0], dtype=np.uint8)
    hc = np.array([0, 1], dtype=np.uint8)
    return {
        "jump_sums": lambda m: m.jump_sums(offsets, times, sizes, 0.6),
        "box_sums": lambda m: m.box_sums(offsets, times, sizes, 0.2, 0.8, lo, hi, lc, hc),
        "sup_integral": lambda m: m.sup_integral(offsets, times, sizes, drift, 1.0),
    }


def _arrays(result):
    return result if isinstance(result, tuple) else (result,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    offsets, times, sizes, drift = make_batch(args.samples, args.seed)
    print(f"{args.samples} samples, {len(times)} jumps")
    if _compiled is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases(offsets, times, sizes, drift).items():
        py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:<14}{py:>12.2f}{'-':>12}{'-':>10}")
            continue
        a, b = call(_kernels_py), call(_compiled)
        for x, y in zip(_arrays(a), _arrays(b)):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
        cy = min(timeit.repeat(lambda: call(_compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<14}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
