"""The canonical sample space: per-sector jump lists, their law, and path evaluation.

An element ``omega`` is a finite list of ``(time, size)`` pairs per sector on
``[0, T)``.  The path is

    X_t = (gamma - sum_{k compensated} drift_k) * t + sum_{t_j <= t} x_j + sigma * W_t

which is the finite-sector form of the canonical Lévy process.  Adding one
jump ``(r, v)`` shifts every ``X_t`` with ``t >= r`` by exactly ``v``.

Two containers are provided.  :class:`JumpList` is the single immutable
sample point.  :class:`JumpBatch` holds many samples in CSR layout and is
what the Monte Carlo code works on.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from . import kernels
from .errors import BackendMismatch, HorizonExceeded, UnsupportedJumpSize, ZeroJump
from .levy_model import LevyTriplet, SectorPartition

DEFAULT_BROWNIAN_STEPS = 256

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


def _as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (int, np.integer)):
        return np.random.SeedSequence(int(seed))
    seed = [int(s) for s in seed]
    return np.random.SeedSequence(seed[0], spawn_key=tuple(seed[1:]))


@dataclass(frozen=True)
class BrownianComponent:
    """Brownian motion on a uniform grid, linearly interpolated in between."""

    step: float
    increments: tuple[float, ...]

    @cached_property
    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def at(self, t: float) -> float:
        return float(_interp_brownian(self.values[None, :], self.step, t)[0])


def _interp_brownian(W: np.ndarray, step: float, t: float) -> np.ndarray:
    G = W.shape[1] - 1
    pos = t / step
    i = min(int(math.floor(pos)), G)
    if i >= G:
        return W[:, G].copy()
    frac = pos - i
    return W[:, i] + frac * (W[:, i + 1] - W[:, i])


def _check_triplet(partition: SectorPartition, triplet: LevyTriplet):
    if partition.nu != triplet.nu:
        raise BackendMismatch("path was sampled for a different jump measure")


# ---------------------------------------------------------------------------
# single sample point
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpList:
    """One canonical sample point ``omega``.

    ``sectors[i]`` holds the time-sorted ``(t, x)`` pairs of partition sector
    ``i``.  All sectors empty is the distinguished empty element.
    """

    partition: SectorPartition
    horizon: float
    sectors: tuple[tuple[tuple[float, float], ...], ...]
    brownian: BrownianComponent | None = None

    def __post_init__(self):
        if len(self.sectors) != len(self.partition.sectors):
            raise ValueError("one jump tuple per partition sector required")

    @property
    def is_empty(self) -> bool:
        return all(len(s) == 0 for s in self.sectors)

    @property
    def n_jumps(self) -> int:
        return sum(len(s) for s in self.sectors)

    def jumps(self):
        """All ``(t, x)`` pairs in storage order (sector, then time)."""
        return [pair for s in self.sectors for pair in s]

    def to_json(self) -> dict:
        doc = {
            "horizon": self.horizon,
            "sectors": [
                {"k": sec.k, "jumps": [[t, x] for t, x in jumps]}
                for sec, jumps in zip(self.partition.sectors, self.sectors)
            ],
        }
        if self.brownian is not None:
            doc["brownian"] = {"step": self.brownian.step, "increments": list(self.brownian.increments)}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict, partition: SectorPartition) -> "JumpList":
        by_k = {sec.k: i for i, sec in enumerate(partition.sectors)}
        sectors = [[] for _ in partition.sectors]
        T = float(doc["horizon"])
        for entry in doc["sectors"]:
            i = by_k.get(int(entry["k"]))
            if i is None:
                raise ValueError(f"unknown sector k={entry['k']}")
            for t, x in entry["jumps"]:
                if not partition.sectors[i].set.contains(x):
                    raise UnsupportedJumpSize(f"jump size {x} not in sector k={entry['k']}")
                if not 0.0 <= t < T:
                    raise HorizonExceeded(f"jump time {t} outside [0, {T})")
                sectors[i].append((float(t), float(x)))
        brownian = None
        if "brownian" in doc:
            b = doc["brownian"]
            brownian = BrownianComponent(float(b["step"]), tuple(float(z) for z in b["increments"]))
        return cls(partition, T, tuple(tuple(sorted(s)) for s in sectors), brownian)


def evaluate_path(omega, triplet: LevyTriplet, t: float):
    """``X_t(omega)``; a float for a JumpList, an array for a JumpBatch."""
    if isinstance(omega, JumpBatch):
        return omega.path_values(triplet, t)
    _check_triplet(omega.partition, triplet)
    if not 0.0 <= t <= omega.horizon:
        raise HorizonExceeded(f"t={t} outside [0, {omega.horizon}]")
    acc = 0.0
    for jumps in omega.sectors:
        for tj, xj in jumps:
            if tj <= t:
                acc = acc + xj
    value = (triplet.gamma - omega.partition.compensator) * t + acc
    if triplet.sigma > 0.0:
        if omega.brownian is None:
            raise ValueError("sigma > 0 but the sample carries no Brownian component")
        value = value + triplet.sigma * omega.brownian.at(t)
    return value


def add_jump(omega, r, v):
    """``omega_{r,v}``: the same sample with one extra jump of size ``v`` at time ``r``."""
    if isinstance(omega, JumpBatch):
        return omega.add_jump(r, v)
    r, v = float(r), float(v)
    if v == 0.0:
        raise ZeroJump("cannot add a jump of size 0")
    if not 0.0 <= r < omega.horizon:
        raise HorizonExceeded(f"r={r} outside [0, {omega.horizon})")
    i = omega.partition.locate(v)
    if i < 0:
        raise UnsupportedJumpSize(f"jump size {v} outside the covered support {omega.partition.covered}")
    jumps = list(omega.sectors[i])
    bisect.insort_right(jumps, (r, v), key=lambda p: p[0])
    sectors = omega.sectors[:i] + (tuple(jumps),) + omega.sectors[i + 1 :]
    return JumpList(omega.partition, omega.horizon, sectors, omega.brownian)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JumpBatch:
    """``n`` sample points in CSR layout, jumps ordered by (sample, sector, time)."""

    partition: SectorPartition
    horizon: float
    offsets: np.ndarray
    times: np.ndarray
    sizes: np.ndarray
    sector: np.ndarray
    brownian: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "offsets", _frozen(self.offsets, np.int64))
        object.__setattr__(self, "times", _frozen(self.times, np.float64))
        object.__setattr__(self, "sizes", _frozen(self.sizes, np.float64))
        object.__setattr__(self, "sector", _frozen(self.sector, np.int64))
        if self.brownian is not None:
            object.__setattr__(self, "brownian", _frozen(self.brownian, np.float64))

    def __len__(self):
        return len(self.offsets) - 1

    @property
    def brownian_step(self) -> float:
        return self.horizon / (self.brownian.shape[1] - 1)

    @property
    def sample_ids(self) -> np.ndarray:
        return np.repeat(np.arange(len(self)), np.diff(self.offsets))

    def jump_list(self, i: int) -> JumpList:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        sectors = [[] for _ in self.partition.sectors]
        for t, x, k in zip(self.times[lo:hi], self.sizes[lo:hi], self.sector[lo:hi]):
            sectors[k].append((float(t), float(x)))
        brownian = None
        if self.brownian is not None:
            brownian = BrownianComponent(self.brownian_step, tuple(np.diff(self.brownian[i]).tolist()))
        return JumpList(self.partition, self.horizon, tuple(tuple(s) for s in sectors), brownian)

    @classmethod
    def from_jump_lists(cls, omegas: Sequence[JumpList]) -> "JumpBatch":
        first = omegas[0]
        times, sizes, sector, counts = [], [], [], []
        for om in omegas:
            if om.partition is not first.partition and om.partition != first.partition:
                raise ValueError("all samples must share one partition")
            n = 0
            for k, jumps in enumerate(om.sectors):
                for t, x in jumps:
                    times.append(t)
                    sizes.append(x)
                    sector.append(k)
                n += len(jumps)
            counts.append(n)
        brownian = None
        if first.brownian is not None:
            brownian = np.stack([om.brownian.values for om in omegas])
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(first.partition, first.horizon, offsets, times, sizes, sector, brownian)

    # -- evaluation -----------------------------------------------------

    def _check_time(self, t):
        if not 0.0 <= t <= self.horizon:
            raise HorizonExceeded(f"t={t} outside [0, {self.horizon}]")

    def path_values(self, triplet: LevyTriplet, t: float) -> np.ndarray:
        _check_triplet(self.partition, triplet)
        self._check_time(t)
        key = ("X", t, triplet.gamma, triplet.sigma)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        acc = kernels.jump_sums(self.offsets, self.times, self.sizes, t)
        value = (triplet.gamma - self.partition.compensator) * t + acc
        if triplet.sigma > 0.0:
            if self.brownian is None:
                raise ValueError("sigma > 0 but the batch carries no Brownian component")
            value = value + triplet.sigma * _interp_brownian(self.brownian, self.brownian_step, t)
        value.setflags(write=False)
        self._cache[key] = value
        return value

    @cached_property
    def time_sorted(self):
        """``(times, sizes)`` sorted by time within each sample (sectors merged)."""
        order = np.lexsort((self.times, self.sample_ids))
        return self.times[order], self.sizes[order]

    def box_sums(self, s: float, t: float, A) -> np.ndarray:
        """Per sample, the sum of jump sizes in ``[s, t) x A``."""
        return kernels.box_sums(self.offsets, self.times, self.sizes, s, t, A.intervals)

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    # -- perturbation ---------------------------------------------------

    def add_jump(self, r, v) -> "JumpBatch":
        """Insert ``(r[i], v[i])`` into sample ``i`` (scalars broadcast)."""
        n = len(self)
        r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
        v = np.broadcast_to(np.asarray(v, dtype=float), (n,))
        if np.any(v == 0.0):
            raise ZeroJump("cannot add a jump of size 0")
        if np.any((r < 0.0) | (r >= self.horizon)):
            raise HorizonExceeded(f"perturbation time outside [0, {self.horizon})")
        k = np.atleast_1d(self.partition.locate(v))
        if np.any(k < 0):
            bad = v[k < 0][0]
            raise UnsupportedJumpSize(f"jump size {bad} outside the covered support {self.partition.covered}")
        ids = self.sample_ids
        k_rep, r_rep = k[ids], r[ids]
        before = (self.sector < k_rep) | ((self.sector == k_rep) & (self.times <= r_rep))
        pos = self.offsets[:-1] + np.bincount(ids, weights=before, minlength=n).astype(np.int64)
        times = np.insert(self.times, pos, r)
        sizes = np.insert(self.sizes, pos, v)
        sector = np.insert(self.sector, pos, k)
        offsets = self.offsets + np.arange(n + 1)
        out = JumpBatch(self.partition, self.horizon, offsets, times, sizes, sector, self.brownian)
        if "time_sorted" in self.__dict__:
            # splice into the parent's time order instead of re-sorting
            ts, xs = self.time_sorted
            pos = self.offsets[:-1] + np.bincount(ids, weights=ts <= r_rep, minlength=n).astype(np.int64)
            out.__dict__["time_sorted"] = (np.insert(ts, pos, r), np.insert(xs, pos, v))
        return out


def as_batch(omega) -> JumpBatch:
    return omega if isinstance(omega, JumpBatch) else JumpBatch.from_jump_lists([omega])


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _redraw_ties(rng, T, sample, sector, times):
    """Re-draw uniforms that collide with an earlier jump time of the same sample and sector."""
    while True:
        order = np.lexsort((times, sector, sample))
        ts, ks, ss = times[order], sector[order], sample[order]
        dup = np.zeros(len(ts), dtype=bool)
        if len(ts) > 1:
            dup[1:] = (ts[1:] == ts[:-1]) & (ks[1:] == ks[:-1]) & (ss[1:] == ss[:-1])
        if not dup.any():
            return order
        idx = order[dup]
        times[idx] = np.minimum(rng.random(len(idx)) * T, np.nextafter(T, 0.0))


def sample_canonical_batch(partition, T, rng, n, brownian_steps=None) -> JumpBatch:
    """Uniform-times construction: Poisson counts per sector, i.i.d. uniform times, ``Q_k`` sizes.

    Draw order: all counts (sector-major), then per sector the times, side
    selectors and size uniforms, then the Brownian increments.
    """
    if not T > 0:
        raise ValueError("horizon must be > 0")
    secs = partition.sectors
    counts = rng.poisson([[s.mass * T] for s in secs], size=(len(secs), n)) if secs else np.zeros((0, n), int)
    times, sizes, sector, sample = [], [], [], []
    for k, sec in enumerate(secs):
        m = int(counts[k].sum())
        times.append(np.minimum(rng.random(m) * T, np.nextafter(T, 0.0)))
        u_side = rng.random(m)
        u_size = rng.random(m)
        sizes.append(sec.sample_sizes(partition.nu, u_side, u_size) if m else np.empty(0))
        sector.append(np.full(m, k, dtype=np.int64))
        sample.append(np.repeat(np.arange(n), counts[k]))
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.empty(0, dt)  # noqa: E731
    times, sizes = cat(times, float), cat(sizes, float)
    sector, sample = cat(sector, np.int64), cat(sample, np.int64)
    order = _redraw_ties(rng, T, sample, sector, times)
    offsets = np.concatenate([[0], np.cumsum(counts.sum(axis=0))])
    brownian = None
    if brownian_steps:
        dt = T / brownian_steps
        inc = rng.normal(0.0, math.sqrt(dt), size=(n, brownian_steps))
        brownian = np.concatenate([np.zeros((n, 1)), np.cumsum(inc, axis=1)], axis=1)
    return JumpBatch(partition, float(T), offsets, times[order], sizes[order], sector[order], brownian)


def sample_jump_list(partition: SectorPartition, T: float, rng_seed: SeedLike, brownian_steps=None) -> JumpList:
    """One canonical sample point, deterministic in ``rng_seed``.

    ``rng_seed`` may be an int, a ``(master, worker, sample)`` tuple or a SeedSequence.
    """
    rng = np.random.Generator(np.random.PCG64(_as_seed_sequence(rng_seed)))
    return sample_canonical_batch(partition, T, rng, 1, brownian_steps).jump_list(0)


@dataclass(frozen=True)
class CanonicalSampler:
    """Batch sampler for the canonical construction (PCG64 streams, stream id 0)."""

    triplet: LevyTriplet
    partition: SectorPartition
    horizon: float
    brownian_steps: int = DEFAULT_BROWNIAN_STEPS

    name = "canonical"
    stream = 0

    def __post_init__(self):
        _check_triplet(self.partition, self.triplet)

    def sample(self, seed_seq: np.random.SeedSequence, n: int) -> JumpBatch:
        rng = np.random.Generator(np.random.PCG64(seed_seq))
        steps = self.brownian_steps if self.triplet.sigma > 0 else None
        return sample_canonical_batch(self.partition, self.horizon, rng, n, steps)
