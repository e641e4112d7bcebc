"""Compensated random measure, multiple integrals of box indicators, chaos coefficients.

For a rectangle ``B = [s, t) x A``

    M(B) = sum_{(t_j, x_j) in B} x_j - (t - s) int_A x nu(dx) + sigma (W_t - W_s) 1{0 in A}

with the jump part restricted to the sectors the partition covers.  For
pairwise disjoint boxes, ``prod_j M(B_j)`` is the n-fold integral of the
indicator of ``B_1 x ... x B_n``, and

    c = E[F * prod_j M(B_j)] / (n! prod_j m(B_j))

is the average of the symmetric chaos integrand ``f_n`` over that box.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .canonical_path import JumpBatch, JumpList, _interp_brownian, as_batch
from .engine import CHUNK_SIZE, RunningStats, map_chunks, merged_stats
from .errors import HorizonExceeded, OverlappingBoxes, ZeroMeasureBox
from .functionals import Node, eval_functional
from .levy_model import ControlMeasure, IntervalSet, LevyTriplet, Rect, SectorPartition, nu_moment


@lru_cache(maxsize=4096)
def _size_compensator(partition: SectorPartition, A: IntervalSet) -> float:
    covered = A.intersect(partition.covered)
    return 0.0 if covered.is_empty else nu_moment(partition.nu, covered, 1)


def random_measure(omega, triplet: LevyTriplet, B: Rect):
    """``M(B)``; a float for a JumpList, an array for a JumpBatch."""
    batch = as_batch(omega)
    if B.t > batch.horizon:
        raise HorizonExceeded(f"rectangle {B} exceeds horizon {batch.horizon}")
    key = ("M", B, triplet.sigma)
    out = batch._cache.get(key)
    if out is None:
        jumps = batch.box_sums(B.s, B.t, B.A)
        out = jumps - (B.t - B.s) * _size_compensator(batch.partition, B.A)
        if triplet.sigma > 0.0 and B.A.contains(0.0):
            step = batch.brownian_step
            dW = _interp_brownian(batch.brownian, step, B.t) - _interp_brownian(batch.brownian, step, B.s)
            out = out + triplet.sigma * dW
        batch._cache[key] = out
    return float(out[0]) if isinstance(omega, JumpList) else out


def check_disjoint(boxes: Sequence[Rect]):
    for i, j in combinations(range(len(boxes)), 2):
        if not boxes[i].is_disjoint(boxes[j]):
            raise OverlappingBoxes(f"boxes {boxes[i]} and {boxes[j]} overlap")


def multiple_integral(omega, triplet: LevyTriplet, boxes: Sequence[Rect]):
    """``I_n(1_{B_1 x ... x B_n}) = prod_j M(B_j)`` for pairwise disjoint boxes."""
    check_disjoint(boxes)
    batch = as_batch(omega)
    out = np.ones(len(batch))
    for B in boxes:
        out = out * random_measure(batch, triplet, B)
    return float(out[0]) if isinstance(omega, JumpList) else out


@dataclass(frozen=True)
class RectBasis:
    """Rectangles with cached control measure; ``disjoint`` is verified when set."""

    rects: tuple[Rect, ...]
    measures: tuple[float, ...]
    disjoint: bool

    @classmethod
    def build(cls, rects: Sequence[Rect], cm: ControlMeasure, disjoint: bool = True) -> "RectBasis":
        rects = tuple(rects)
        if disjoint:
            check_disjoint(rects)
        measures = tuple(cm(B) for B in rects)
        for B, m in zip(rects, measures):
            if not m > 0:
                raise ZeroMeasureBox(f"m({B}) = {m}")
        return cls(rects, measures, disjoint)

    def __len__(self):
        return len(self.rects)


def box_grid(horizon: float, n_times: int, size_sets: Sequence) -> list[Rect]:
    """``[i T/n, (i+1) T/n) x A`` for every time slot and every size set."""
    edges = np.linspace(0.0, horizon, n_times + 1)
    return [Rect(edges[i], edges[i + 1], A) for i in range(n_times) for A in size_sets]


@dataclass(frozen=True)
class ChaosCoefficientEstimate:
    order: int
    box_ids: tuple[int, ...]
    box_measures: tuple[float, ...]
    estimate: float
    stderr: float
    n_samples: int


def _canonical(box_ids: Sequence[int]) -> tuple[int, ...]:
    return tuple(sorted(int(i) for i in box_ids))


def coefficient_stats(
    values: Callable[[JumpBatch], np.ndarray],
    boxes: Sequence[Rect],
    tuples: Sequence[tuple[int, ...]],
    sampler,
    n_samples: int,
    seed: int,
    threads=None,
    chunk_size=CHUNK_SIZE,
) -> RunningStats:
    """Streaming stats of ``values(batch)[:, p] * prod_{j in tuple} M(B_j)``.

    ``values`` returns shape ``(n,)`` or ``(n, P)``; the result has shape ``(P, len(tuples))``.
    """
    triplet = sampler.triplet

    def chunk(batch):
        y = np.asarray(values(batch), dtype=float)
        y = y.reshape(len(batch), -1)
        used = sorted({i for tup in tuples for i in tup})
        M = {i: random_measure(batch, triplet, boxes[i]) for i in used}
        out = np.empty((len(batch), y.shape[1], len(tuples)))
        for q, tup in enumerate(tuples):
            prod = np.ones(len(batch))
            for i in tup:
                prod = prod * M[i]
            out[:, :, q] = y * prod[:, None]
        return RunningStats().add(out)

    return merged_stats(map_chunks(sampler, n_samples, seed, chunk, threads, chunk_size))


def _prepare(boxes, tuples, sampler):
    cm = ControlMeasure(sampler.triplet, sampler.horizon, sampler.partition)
    measures = [None] * len(boxes)
    clean = []
    for tup in tuples:
        tup = _canonical(tup)
        check_disjoint([boxes[i] for i in tup])
        for i in tup:
            if measures[i] is None:
                measures[i] = cm(boxes[i])
                if not measures[i] > 0:
                    raise ZeroMeasureBox(f"m({boxes[i]}) = {measures[i]}")
        clean.append(tup)
    return clean, measures


def estimate_coefficients(
    F,
    boxes: Sequence[Rect],
    tuples: Sequence[Sequence[int]],
    sampler,
    n_samples: int,
    seed: int,
    threads=None,
    chunk_size=CHUNK_SIZE,
) -> list[ChaosCoefficientEstimate]:
    """Box-averaged chaos coefficients of ``F`` for every tuple of box indices (one sample pass)."""
    tuples, measures = _prepare(boxes, tuples, sampler)
    if isinstance(F, Node):
        values = lambda batch: eval_functional(F, batch, sampler.triplet)  # noqa: E731
    else:
        values = F
    stats = coefficient_stats(values, boxes, tuples, sampler, n_samples, seed, threads, chunk_size)
    mean = np.asarray(stats.mean).reshape(-1, len(tuples))[0]
    se = np.asarray(stats.stderr).reshape(-1, len(tuples))[0]
    return [_finish(tup, measures, mean[q], se[q], n_samples) for q, tup in enumerate(tuples)]


def _finish(tup, measures, mean, se, n_samples):
    n = len(tup)
    norm = math.factorial(n) * math.prod(measures[i] for i in tup)
    box_m = tuple(measures[i] for i in tup)
    return ChaosCoefficientEstimate(n, tup, box_m, float(mean / norm), float(se / norm), int(n_samples))


def estimate_chaos_coefficient(
    F,
    boxes: Sequence[Rect],
    sampler,
    n_samples: int,
    seed: int,
    threads=None,
    chunk_size=CHUNK_SIZE,
) -> ChaosCoefficientEstimate:
    """``E[F prod M(B_j)] / (n! prod m(B_j))`` with stderr; ``boxes = []`` gives ``E[F]``.

    The box tuple is put in canonical order first, so permuting ``boxes``
    returns the identical estimate.
    """
    boxes = sorted(boxes, key=lambda B: (B.s, B.t, str(B.A)))
    return estimate_coefficients(F, boxes, [tuple(range(len(boxes)))], sampler, n_samples, seed, threads, chunk_size)[0]


def tuples_for_orders(n_boxes: int, orders: Sequence[int]) -> list[tuple[int, ...]]:
    """All sorted tuples of distinct box indices with the requested lengths."""
    out = []
    for n in sorted(set(orders)):
        out.extend(combinations(range(n_boxes), n))
    return out


def coefficients_to_csv(coeffs: Sequence[ChaosCoefficientEstimate], header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["order", "box_ids", "estimate", "stderr", "n_samples"])
    for c in coeffs:
        w.writerow([c.order, ";".join(map(str, c.box_ids)), repr(c.estimate), repr(c.stderr), c.n_samples])
    return buf.getvalue()
