"""Deterministic chunked Monte Carlo.

Samples are generated in fixed-size chunks.  Chunk ``c`` of stream ``s``
draws from ``SeedSequence(master_seed, spawn_key=(s, c))``, so results depend
on the master seed and chunk size only, never on the number of worker threads.
Per-chunk partial statistics are merged in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

CHUNK_SIZE = 4096


def default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # not on Linux
        return os.cpu_count() or 1


def chunk_seed(master_seed: int, stream: int, chunk: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(chunk)))


def chunk_sizes(n_samples: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(int(n_samples), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(sampler, n_samples, seed, fn, threads=None, chunk_size=CHUNK_SIZE, indexed=False):
    """Apply ``fn(batch)`` to every chunk drawn from ``sampler``; results in chunk order.

    With ``indexed=True`` the call is ``fn(batch, chunk_index, first_sample_id)``.
    """
    sizes = chunk_sizes(n_samples, chunk_size)

    def work(c):
        batch = sampler.sample(chunk_seed(seed, sampler.stream, c), sizes[c])
        if indexed:
            return fn(batch, c, c * chunk_size)
        return fn(batch)

    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(sizes) <= 1:
        return [work(c) for c in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=min(threads, len(sizes))) as pool:
        return list(pool.map(work, range(len(sizes))))


@dataclass
class RunningStats:
    """Streaming (count, mean, M2) accumulator; works elementwise on arrays."""

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    def add(self, x) -> "RunningStats":
        """Fold in a block of observations along axis 0."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] == 0:
            return self
        mean = x.mean(axis=0)
        m2 = ((x - mean) ** 2).sum(axis=0)
        return self.merge(RunningStats(x.shape[0], mean, m2))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        self.count = n
        return self

    @property
    def variance(self):
        if self.count < 2:
            return np.full(np.shape(self.mean), np.nan) if np.ndim(self.mean) else float("nan")
        return self.m2 / (self.count - 1)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.count)


def merged_stats(parts) -> RunningStats:
    acc = RunningStats()
    for p in parts:
        acc.merge(p)
    return acc
