"""Cross-backend equality of chaos coefficients.

The same functional is applied to paths from two samplers that share the
triplet but nothing else: :class:`~levymalliavin.canonical_path.CanonicalSampler`
(Poisson counts + uniform times, PCG64) and :class:`IncrementSampler`
(exponential inter-arrival times, Philox, a different draw order).  Every
requested box-averaged coefficient is estimated on both and compared with a
z-score.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .canonical_path import DEFAULT_BROWNIAN_STEPS, CanonicalSampler, JumpBatch, _check_triplet
from .chaos import _finish, _prepare, coefficient_stats, tuples_for_orders
from .engine import CHUNK_SIZE, default_threads
from .errors import BackendMismatch
from .functionals import Node, eval_functional
from .levy_model import FiniteDiscrete, LevyTriplet, Rect, SectorPartition
from .malliavin import _check_grid, _require_pure_jump, psi_derivative

Z_THRESHOLD = 3.0
FAILURE_ALLOWANCE = 0.01
# |c1 - c2| below this (relative to max(1, |c|)) is float noise, not sampling error
NUMERICAL_FLOOR = 1e-12
MAX_ORDER = 2


@dataclass(frozen=True)
class IncrementSampler:
    """Per-sector renewal construction: exponential gaps until the horizon.

    ``rate_scale != 1`` deliberately mis-specifies the jump intensity while
    still advertising the original triplet (negative control).
    """

    triplet: LevyTriplet
    partition: SectorPartition
    horizon: float
    brownian_steps: int = DEFAULT_BROWNIAN_STEPS
    rate_scale: float = 1.0

    name = "increment"
    stream = 1

    def __post_init__(self):
        _check_triplet(self.partition, self.triplet)

    def _sector_times(self, rng, lam, n):
        T = self.horizon
        width = int(lam * T + 6.0 * math.sqrt(lam * T) + 8)
        arrivals = np.cumsum(rng.exponential(1.0 / lam, size=(n, width)), axis=1)
        mask = arrivals < T
        sample = np.repeat(np.arange(n), mask.sum(axis=1))
        times = arrivals[mask]
        # rows whose last arrival is still inside the horizon keep drawing gaps
        more_s, more_t = [], []
        for i in np.flatnonzero(arrivals[:, -1] < T):
            last = arrivals[i, -1] + rng.exponential(1.0 / lam)
            while last < T:
                more_s.append(i)
                more_t.append(last)
                last += rng.exponential(1.0 / lam)
        if more_s:
            sample = np.concatenate([sample, np.asarray(more_s, np.int64)])
            times = np.concatenate([times, more_t])
            order = np.lexsort((times, sample))
            sample, times = sample[order], times[order]
        return sample, times

    def sample(self, seed_seq: np.random.SeedSequence, n: int) -> JumpBatch:
        rng = np.random.Generator(np.random.Philox(seed_seq))
        T = self.horizon
        nu = self.partition.nu
        samples, sectors, times, sizes = [], [], [], []
        for k, sec in enumerate(self.partition.sectors):
            s_k, t_k = self._sector_times(rng, sec.mass * self.rate_scale, n)
            m = len(t_k)
            if isinstance(nu, FiniteDiscrete):
                inside = [(x, w) for x, w in nu.atoms if sec.set.contains(x)]
                xs = np.array([a[0] for a in inside], dtype=float)
                p = np.array([a[1] for a in inside], dtype=float)
                x_k = rng.choice(xs, size=m, p=p / p.sum())
            else:
                x_k = sec.sample_sizes(nu, rng.random(m), rng.random(m)) if m else np.empty(0)
            samples.append(s_k)
            sectors.append(np.full(m, k, dtype=np.int64))
            times.append(t_k)
            sizes.append(x_k)
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.empty(0, dt)  # noqa: E731
        sample, sector = cat(samples, np.int64), cat(sectors, np.int64)
        times, sizes = cat(times, float), cat(sizes, float)
        order = np.argsort(sample, kind="stable")
        offsets = np.concatenate([[0], np.cumsum(np.bincount(sample, minlength=n))])
        brownian = None
        if self.triplet.sigma > 0:
            dt = T / self.brownian_steps
            W = np.cumsum(rng.standard_normal((n, self.brownian_steps)) * math.sqrt(dt), axis=1)
            brownian = np.concatenate([np.zeros((n, 1)), W], axis=1)
        return JumpBatch(self.partition, float(T), offsets, times[order], sizes[order], sector[order], brownian)


def backends_for(triplet, partition, horizon, brownian_steps=DEFAULT_BROWNIAN_STEPS):
    return (
        CanonicalSampler(triplet, partition, horizon, brownian_steps),
        IncrementSampler(triplet, partition, horizon, brownian_steps),
    )


@dataclass(frozen=True)
class TransferRow:
    order: int
    box_ids: tuple[int, ...]
    c1: float
    se1: float
    c2: float
    se2: float
    point: tuple[float, float] | None = None

    @property
    def z(self) -> float:
        diff = abs(self.c1 - self.c2)
        if diff == 0.0:
            return 0.0
        floor = NUMERICAL_FLOOR * max(1.0, abs(self.c1), abs(self.c2))
        if diff <= floor:
            return 0.0
        se = math.sqrt(self.se1**2 + self.se2**2)
        return diff / se if se > 0 else math.inf

    @property
    def passed(self) -> bool:
        return self.z <= Z_THRESHOLD


@dataclass
class TransferReport:
    rows: list[TransferRow] = field(default_factory=list)
    backends: tuple[str, str] = ("canonical", "increment")

    @property
    def n_pass(self) -> int:
        return sum(r.passed for r in self.rows)

    @property
    def passed(self) -> bool:
        """At least 99 % of rows within 3 sigma (all rows when there are fewer than 100)."""
        return self.n_pass >= (1.0 - FAILURE_ALLOWANCE) * len(self.rows)

    @property
    def max_z(self) -> float:
        return max((r.z for r in self.rows), default=0.0)

    def failing(self) -> list[TransferRow]:
        return [r for r in self.rows if not r.passed]

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "v", "order", "box_ids", "c1", "stderr1", "c2", "stderr2", "z", "pass"])
        for row in self.rows:
            r, v = row.point if row.point is not None else ("", "")
            w.writerow(
                [
                    r if r == "" else repr(r),
                    v if v == "" else repr(v),
                    row.order,
                    ";".join(map(str, row.box_ids)),
                    repr(row.c1),
                    repr(row.se1),
                    repr(row.c2),
                    repr(row.se2),
                    repr(row.z),
                    int(row.passed),
                ]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "rows": len(self.rows),
            "passed_rows": self.n_pass,
            "max_z": self.max_z,
            "pass": self.passed,
            "backends": list(self.backends),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _check_backends(b1, b2, triplet):
    for b in (b1, b2):
        if b.triplet != triplet:
            raise BackendMismatch(f"backend {b.name} carries triplet {b.triplet}, expected {triplet}")
    if b1.horizon != b2.horizon:
        raise BackendMismatch(f"horizons differ: {b1.horizon} vs {b2.horizon}")
    if b1.partition != b2.partition:
        raise BackendMismatch("backends use different sector partitions")


def _both(values_for, boxes, tuples, backends, n_samples, seeds, threads, chunk_size):
    """Run both backends concurrently, each on half the worker budget."""
    per = max(1, (threads or default_threads()) // 2)
    with ThreadPoolExecutor(max_workers=2) as pool:
        futs = [
            pool.submit(coefficient_stats, values_for(b), boxes, tuples, b, n_samples, seed, per, chunk_size)
            for b, seed in zip(backends, seeds)
        ]
        return [f.result() for f in futs]


def _orders_ok(orders):
    bad = [n for n in orders if not 0 <= n <= MAX_ORDER]
    if bad:
        raise ValueError(f"orders must lie in 0..{MAX_ORDER}, got {bad}")


def run_transfer_test(
    F: Node,
    triplet: LevyTriplet,
    partition: SectorPartition,
    horizon: float,
    boxes: Sequence[Rect],
    orders: Sequence[int],
    n_samples: int,
    seeds: tuple[int, int],
    backends=None,
    threads=None,
    chunk_size=CHUNK_SIZE,
) -> TransferReport:
    """Estimate the coefficients of ``F`` on both backends and compare row by row."""
    _orders_ok(orders)
    b1, b2 = backends or backends_for(triplet, partition, horizon)
    _check_backends(b1, b2, triplet)
    tuples = tuples_for_orders(len(boxes), orders)
    tuples, measures = _prepare(boxes, tuples, b1)

    def values_for(sampler):
        return lambda batch: eval_functional(F, batch, sampler.triplet)

    est = []
    for stats in _both(values_for, boxes, tuples, (b1, b2), n_samples, seeds, threads, chunk_size):
        mean = np.asarray(stats.mean).reshape(len(tuples))
        se = np.asarray(stats.stderr).reshape(len(tuples))
        est.append([_finish(t, measures, mean[q], se[q], n_samples) for q, t in enumerate(tuples)])
    rows = [
        TransferRow(a.order, a.box_ids, a.estimate, a.stderr, b.estimate, b.stderr) for a, b in zip(*est)
    ]
    return TransferReport(rows, (b1.name, b2.name))


def run_field_transfer_test(
    F: Node,
    triplet: LevyTriplet,
    partition: SectorPartition,
    horizon: float,
    grid,
    boxes: Sequence[Rect],
    orders: Sequence[int],
    n_samples: int,
    seeds: tuple[int, int],
    backends=None,
    threads=None,
    chunk_size=CHUNK_SIZE,
) -> TransferReport:
    """Same comparison for the random field ``(r, v) -> D_{r,v} F`` on a grid."""
    _require_pure_jump(triplet)
    _orders_ok(orders)
    b1, b2 = backends or backends_for(triplet, partition, horizon)
    _check_backends(b1, b2, triplet)
    r, v = _check_grid(grid, horizon, partition)
    if len(r) == 0:
        return TransferReport([], (b1.name, b2.name))
    tuples = tuples_for_orders(len(boxes), orders)
    tuples, measures = _prepare(boxes, tuples, b1)

    def values_for(sampler):
        def values(batch):
            return np.stack([psi_derivative(F, batch, sampler.triplet, r[j], v[j]) for j in range(len(r))], axis=1)

        return values

    est = []
    for stats in _both(values_for, boxes, tuples, (b1, b2), n_samples, seeds, threads, chunk_size):
        mean = np.asarray(stats.mean).reshape(len(r), len(tuples))
        se = np.asarray(stats.stderr).reshape(len(r), len(tuples))
        est.append((mean, se))
    rows = []
    for p in range(len(r)):
        for q, tup in enumerate(tuples):
            a = _finish(tup, measures, est[0][0][p, q], est[0][1][p, q], n_samples)
            b = _finish(tup, measures, est[1][0][p, q], est[1][1][p, q], n_samples)
            rows.append(
                TransferRow(a.order, a.box_ids, a.estimate, a.stderr, b.estimate, b.stderr, (float(r[p]), float(v[p])))
            )
    return TransferReport(rows, (b1.name, b2.name))
