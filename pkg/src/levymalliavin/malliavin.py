"""Difference-operator Malliavin derivative for pure-jump Lévy functionals.

Two routes compute ``D_{r,v} F``:

* :func:`psi_derivative` adds a jump ``(r, v)`` to the sample point and
  takes ``(F(omega_{r,v}) - F(omega)) / v``;
* :func:`phi_derivative` handles cylindrical ``phi(X_{t_1}, ..., X_{t_m})`` by
  shifting the arguments, ``(phi(X_{t_i} + v 1{r <= t_i}) - phi(X_{t_i})) / v``,
  without ever building ``omega_{r,v}``.

They agree on cylindrical functionals up to float rounding, which the test
suite checks.  The chain rule for ``f(omega, Y) = G(X, F(X))`` is checked by
:func:`chain_rule_check` / :func:`chain_rule_report`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .canonical_path import JumpBatch, JumpList, add_jump, as_batch
from .engine import CHUNK_SIZE, RunningStats, chunk_seed, map_chunks, merged_stats
from .errors import NotCylindrical, SigmaNotZero, ToleranceExceeded, ZeroJump
from .functionals import Cylindrical, Node, bind, eval_functional, eval_scalar, parametric_eval
from .levy_model import LevyTriplet, SectorPartition

PATHWISE_TOL = 1e-12
CHAIN_RULE_TOL = 1e-10
PERTURBATION_STREAM = 100  # RNG stream offset for random (r, v) draws


def _require_pure_jump(triplet: LevyTriplet):
    if triplet.sigma != 0.0:
        raise SigmaNotZero(f"difference operator needs sigma = 0, got {triplet.sigma}")


def _result(omega, values):
    return float(values[0]) if isinstance(omega, JumpList) else values


def psi_derivative(F: Node, omega, triplet: LevyTriplet, r, v):
    """``(F(omega_{r,v}) - F(omega)) / v`` via an explicit added jump.

    ``F`` is a functional tree or any callable mapping a JumpBatch to per-sample values.
    """
    _require_pure_jump(triplet)
    batch = as_batch(omega)
    v_arr = np.broadcast_to(np.asarray(v, dtype=float), (len(batch),))
    shifted = add_jump(batch, r, v_arr)
    value = (lambda b: eval_functional(F, b, triplet)) if isinstance(F, Node) else F
    out = (np.asarray(value(shifted), dtype=float) - np.asarray(value(batch), dtype=float)) / v_arr
    return _result(omega, out)


def phi_derivative(F: Node, omega, triplet: LevyTriplet, r, v):
    """Shift-quotient of a cylindrical functional; never constructs ``omega_{r,v}``."""
    if not isinstance(F, Cylindrical):
        raise NotCylindrical(f"expected a Cylindrical functional, got {type(F).__name__}")
    _require_pure_jump(triplet)
    batch = as_batch(omega)
    n = len(batch)
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    v = np.broadcast_to(np.asarray(v, dtype=float), (n,))
    if np.any(v == 0.0):
        raise ZeroJump("v must be nonzero")
    base = [batch.path_values(triplet, t) for t in F.times]
    moved = [x + v * (r <= t) for x, t in zip(base, F.times)]
    out = (eval_scalar(F.phi, moved, n) - eval_scalar(F.phi, base, n)) / v
    return _result(omega, out)


D = psi_derivative


# ---------------------------------------------------------------------------
# derivative fields
# ---------------------------------------------------------------------------


@dataclass
class DerivativeField:
    """Monte Carlo mean and stderr of ``D_{r,v} F`` on a grid of ``(r, v)`` points."""

    r: np.ndarray
    v: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "v", "mean", "stderr", "n_samples"])
        for row in zip(self.r, self.v, self.mean, self.stderr):
            w.writerow([repr(float(x)) for x in row] + [self.n_samples])
        return buf.getvalue()


def _check_grid(grid, horizon, partition):
    grid = np.asarray(grid, dtype=float).reshape(-1, 2)
    r, v = grid[:, 0], grid[:, 1]
    if np.any((r < 0) | (r >= horizon)):
        raise ValueError(f"grid times must lie in [0, {horizon})")
    if np.any(v == 0):
        raise ValueError("grid jump sizes must be nonzero")
    if len(v) and np.any(np.atleast_1d(partition.locate(v)) < 0):
        raise ValueError("grid jump sizes must lie in the covered support")
    return r, v


def derivative_field(F: Node, sampler, grid, n_samples: int, seed: int, threads=None, chunk_size=CHUNK_SIZE):
    """``E[D_{r,v} F]`` and its stderr at each grid point, one common set of samples."""
    _require_pure_jump(sampler.triplet)
    r, v = _check_grid(grid, sampler.horizon, sampler.partition)

    def chunk(batch):
        vals = np.empty((len(batch), len(r)))
        for j in range(len(r)):
            vals[:, j] = psi_derivative(F, batch, sampler.triplet, r[j], v[j])
        return RunningStats().add(vals)

    stats = merged_stats(map_chunks(sampler, n_samples, seed, chunk, threads, chunk_size))
    mean = np.asarray(stats.mean, dtype=float).reshape(len(r))
    stderr = np.asarray(stats.stderr, dtype=float).reshape(len(r))
    return DerivativeField(r, v, mean, stderr, int(n_samples))


def jump_size_grid(partition: SectorPartition, per_sector: int = 3) -> np.ndarray:
    """Representative jump sizes: the atoms for discrete measures, ``Q_k`` quantiles otherwise."""
    nu = partition.nu
    if hasattr(nu, "atoms"):
        return np.array([x for x, _ in nu.atoms if partition.locate(x) >= 0])
    out = []
    u = (np.arange(per_sector) + 0.5) / per_sector
    for sec in partition.sectors:
        out.extend(sec.sample_sizes(nu, u, u).tolist())
    return np.array(sorted(out))


def default_grid(partition: SectorPartition, horizon: float, n_times: int = 4, per_sector: int = 3) -> np.ndarray:
    times = (np.arange(n_times) + 0.5) * horizon / n_times
    sizes = jump_size_grid(partition, per_sector)
    return np.array([(t, x) for t in times for x in sizes]).reshape(-1, 2)


# ---------------------------------------------------------------------------
# chain rule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainRuleRow:
    r: float
    v: float
    lhs: float
    rhs_term1: float
    rhs_term2: float

    @property
    def abs_err(self) -> float:
        return abs(self.lhs - (self.rhs_term1 + self.rhs_term2))


def _chain_terms(G: Node, F: Node, batch: JumpBatch, triplet: LevyTriplet, r, v):
    n = len(batch)
    v = np.broadcast_to(np.asarray(v, dtype=float), (n,))
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    shifted = add_jump(batch, r, v)
    lhs = psi_derivative(bind(G, F), batch, triplet, r, v)
    Y = eval_functional(F, batch, triplet)
    DY = psi_derivative(F, batch, triplet, r, v)
    x_moved = Y + v * DY
    g_base_moved = parametric_eval(G, batch, triplet, x_moved)
    rhs1 = (parametric_eval(G, shifted, triplet, x_moved) - g_base_moved) / v
    rhs2 = (g_base_moved - parametric_eval(G, batch, triplet, Y)) / v
    return r, v, lhs, rhs1, rhs2


def chain_rule_check(G: Node, F: Node, omega, triplet: LevyTriplet, r, v, tol: float = CHAIN_RULE_TOL):
    """One row of the chain-rule identity ``D f(., Y) = (D f)(., Y + v DY) + [f(., Y + v DY) - f(., Y)] / v``.

    Raises ToleranceExceeded (carrying the serialised sample) when the two
    sides differ by more than ``tol``.
    """
    _require_pure_jump(triplet)
    if not isinstance(omega, JumpList):
        raise TypeError("chain_rule_check takes a single JumpList; use chain_rule_report for batches")
    _, _, lhs, rhs1, rhs2 = _chain_terms(G, F, as_batch(omega), triplet, r, v)
    row = ChainRuleRow(float(r), float(v), float(lhs[0]), float(rhs1[0]), float(rhs2[0]))
    if not row.abs_err <= tol:
        raise ToleranceExceeded(
            f"chain rule violated by {row.abs_err:.3e} at r={r}, v={v}", omega.dumps(), float(r), float(v)
        )
    return row


@dataclass
class ChainRuleReport:
    sample_id: np.ndarray
    r: np.ndarray
    v: np.ndarray
    lhs: np.ndarray
    rhs1: np.ndarray
    rhs2: np.ndarray

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.lhs - (self.rhs1 + self.rhs2))

    @property
    def max_abs_error(self) -> float:
        return float(self.abs_err.max()) if len(self.lhs) else 0.0

    def worst_row(self) -> int:
        return int(np.argmax(self.abs_err))

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "r", "v", "lhs", "rhs1", "rhs2", "abs_err"])
        for row in zip(self.sample_id, self.r, self.v, self.lhs, self.rhs1, self.rhs2, self.abs_err):
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"rows": int(len(self.lhs)), "max_abs_err": self.max_abs_error}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _random_rv(rng, n, horizon, sizes):
    r = rng.random(n) * horizon
    v = sizes[rng.integers(len(sizes), size=n)]
    return r, v


def chain_rule_report(
    G: Node,
    F: Node,
    sampler,
    n_samples: int,
    seed: int,
    threads=None,
    chunk_size=CHUNK_SIZE,
    sizes=None,
) -> ChainRuleReport:
    """Chain-rule rows for ``n_samples`` random ``(omega, r, v)``.

    ``r`` is uniform on ``[0, T)``; ``v`` is drawn from ``sizes`` (default
    :func:`jump_size_grid`).  The ``(r, v)`` draws use their own stream
    derived from the chunk seed, so rows are reproducible.
    """
    triplet = sampler.triplet
    _require_pure_jump(triplet)
    sizes = jump_size_grid(sampler.partition) if sizes is None else np.asarray(sizes, dtype=float)

    def chunk(batch, c, first_id):
        rng = np.random.Generator(np.random.PCG64(chunk_seed(seed, PERTURBATION_STREAM + sampler.stream, c)))
        r, v = _random_rv(rng, len(batch), sampler.horizon, sizes)
        _, _, lhs, rhs1, rhs2 = _chain_terms(G, F, batch, triplet, r, v)
        return np.arange(first_id, first_id + len(batch)), r, v, lhs, rhs1, rhs2

    parts = map_chunks(sampler, n_samples, seed, chunk, threads, chunk_size, indexed=True)
    cols = [np.concatenate([p[i] for p in parts]) if parts else np.empty(0) for i in range(6)]
    return ChainRuleReport(*cols)


# ---------------------------------------------------------------------------
# D_{1,2} norm from chaos coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormEstimate:
    value: float
    stderr: float


def _n_orderings(box_ids) -> int:
    return len(set(permutations(box_ids)))


def d12_norm_estimate(coeffs) -> NormEstimate:
    """``sum_n (n+1)! ||f_n||^2`` from box-averaged coefficients on a full box partition.

    Each coefficient ``c`` for the sorted tuple ``(B_1, ..., B_n)`` stands for
    every ordering of that tuple, each contributing ``c^2 prod m(B_j)``.
    The stderr is propagated to first order, treating coefficients as independent.
    """
    total = 0.0
    var = 0.0
    for c in coeffs:
        weight = math.factorial(c.order + 1) * _n_orderings(c.box_ids) * math.prod(c.box_measures)
        total += weight * c.estimate**2
        se = 0.0 if not math.isfinite(c.stderr) else c.stderr
        var += (2.0 * weight * c.estimate * se) ** 2
    return NormEstimate(total, math.sqrt(var))
