"""Acceptance criteria: one printed PASS/FAIL line per criterion, with its runtime budget."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from levymalliavin.canonical_path import CanonicalSampler, add_jump, evaluate_path
from levymalliavin.chaos import box_grid, estimate_chaos_coefficient, multiple_integral, random_measure
from levymalliavin.cli import main
from levymalliavin.functionals import Const, Coordinate, eval_functional, random_cylindrical, random_path_functional
from levymalliavin.levy_model import FiniteDiscrete, LevyTriplet, Rect, TruncatedStable, build_partition
from levymalliavin.malliavin import chain_rule_report, default_grid, jump_size_grid, phi_derivative, psi_derivative
from levymalliavin.transfer import IncrementSampler, run_transfer_test

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
UNIT = "(0.5, 1.5]"


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion, then assert both the check and the runtime budget."""

    def report(n, title, ok, detail, elapsed, budget):
        within = elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {status} {title}: {detail}; {elapsed:.2f}s (budget {budget:g}s)")
        assert ok, detail
        assert within, f"runtime {elapsed:.2f}s over budget {budget}s"

    return report


def _stable():
    nu = TruncatedStable(0.8, 1.0, 0.0, 3.0)
    tr = LevyTriplet(0.1, 0.0, nu)
    return tr, build_partition(nu, 5, 0.02)


def _mixed():
    nu = FiniteDiscrete([(1.5, 0.7), (-0.3, 2.0), (0.6, 1.1)])
    tr = LevyTriplet(0.25, 0.0, nu)
    return tr, build_partition(nu, 6)


def _poisson():
    nu = FiniteDiscrete([(1.0, 2.0)])
    tr = LevyTriplet(0.0, 0.0, nu)
    return tr, build_partition(nu, 4)


def test_perturbation_identity(verdict):
    t0 = time.perf_counter()
    tr, p = _stable()
    n = 10_000
    batch = CanonicalSampler(tr, p, 1.0).sample(np.random.SeedSequence(2024), n)
    rng = np.random.default_rng(1)
    r, t = rng.random(n), rng.random(n)
    v = jump_size_grid(p)[rng.integers(len(jump_size_grid(p)), size=n)]
    worst = 0.0
    for i in range(n):
        om = batch.jump_list(i)
        d = evaluate_path(add_jump(om, r[i], v[i]), tr, t[i]) - evaluate_path(om, tr, t[i])
        worst = max(worst, abs(d - v[i] * (r[i] <= t[i])))
    verdict(1, "perturbation identity", worst <= 1e-12, f"max abs err {worst:.3e} over {n} draws", time.perf_counter() - t0, 5)


def test_isometry(verdict):
    t0 = time.perf_counter()
    tr, p = _poisson()
    batch = CanonicalSampler(tr, p, 1.0).sample(np.random.SeedSequence(2), 100_000)
    sq = random_measure(batch, tr, Rect(0.0, 1.0, UNIT)) ** 2
    mean, se = sq.mean(), sq.std(ddof=1) / math.sqrt(len(sq))
    ok = abs(mean - 2.0) <= 3 * se
    verdict(2, "isometry E M(B)^2 = m(B)", ok, f"{mean:.4f} vs 2.0, stderr {se:.4f}", time.perf_counter() - t0, 10)


def test_psi_equals_phi(verdict):
    t0 = time.perf_counter()
    tr, p = _stable()
    sizes = jump_size_grid(p)
    rng = np.random.default_rng(3)
    batch = CanonicalSampler(tr, p, 1.0).sample(np.random.SeedSequence(3), 10_000)
    r = rng.random(10_000)
    v = sizes[rng.integers(len(sizes), size=10_000)]
    worst = 0.0
    for _ in range(20):
        F = random_cylindrical(rng, 1.0, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        diff = psi_derivative(F, batch, tr, r, v) - phi_derivative(F, batch, tr, r, v)
        worst = max(worst, float(np.max(np.abs(diff))))
    verdict(3, "Psi = Phi on cylinders", worst <= 1e-12, f"max abs err {worst:.3e}, 20 trees x 1e4", time.perf_counter() - t0, 10)


def test_derivative_of_process(verdict):
    t0 = time.perf_counter()
    tr, p = _stable()
    batch = CanonicalSampler(tr, p, 1.0).sample(np.random.SeedSequence(4), 1000)
    grid = default_grid(p, 1.0, n_times=5, per_sector=3)
    worst = 0.0
    for t in (0.0, 0.3, 0.55, 1.0):
        for r, v in grid:
            d = psi_derivative(Coordinate(t), batch, tr, r, v)
            worst = max(worst, float(np.max(np.abs(d - (r <= t)))))
    verdict(4, "D X_t = 1[0,t](r)", worst <= 1e-12, f"max abs err {worst:.3e} over {len(grid)} grid points", time.perf_counter() - t0, 1)


def test_chain_rule(verdict):
    t0 = time.perf_counter()
    tr, p = _mixed()
    sampler = CanonicalSampler(tr, p, 2.0)
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(20):
        G = random_path_functional(rng, 2.0, parametric=True)
        F = random_path_functional(rng, 2.0)
        worst = max(worst, chain_rule_report(G, F, sampler, 10_000, seed=k).max_abs_error)
    verdict(5, "chain rule", worst <= 1e-10, f"max abs err {worst:.3e}, 20 pairs x 1e4", time.perf_counter() - t0, 60)


def test_product_rule(verdict):
    t0 = time.perf_counter()
    tr, p = _mixed()
    n = 10_000
    batch = CanonicalSampler(tr, p, 2.0).sample(np.random.SeedSequence(6), n)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10):
        F, H = random_path_functional(rng, 2.0), random_path_functional(rng, 2.0)
        r = rng.random(n) * 2.0
        v = np.array([1.5, -0.3, 0.6])[rng.integers(3, size=n)]
        f, h = eval_functional(F, batch, tr), eval_functional(H, batch, tr)
        dF, dH = psi_derivative(F, batch, tr, r, v), psi_derivative(H, batch, tr, r, v)
        lhs = psi_derivative(F * H, batch, tr, r, v)
        worst = max(worst, float(np.max(np.abs(lhs - (f * dH + h * dF + v * dF * dH)))))
    verdict(6, "product rule", worst <= 1e-12, f"max abs err {worst:.3e} over 1e4 samples", time.perf_counter() - t0, 10)


def test_chaos_derivative_link(verdict):
    t0 = time.perf_counter()
    tr, p = _mixed()
    n = 10_000
    B1, B2 = Rect(0.0, 1.0, "[-1, 0)"), Rect(0.5, 2.0, "(0.5, 2]")
    batch = CanonicalSampler(tr, p, 2.0).sample(np.random.SeedSequence(7), n)
    rng = np.random.default_rng(7)
    r = rng.random(n) * 2.0
    v = np.array([1.5, -0.3, 0.6])[rng.integers(3, size=n)]
    Y = lambda b: multiple_integral(b, tr, [B1, B2])  # noqa: E731
    d = psi_derivative(Y, batch, tr, r, v)
    expected = random_measure(batch, tr, B2) * B1.contains(r, v) + random_measure(batch, tr, B1) * B2.contains(r, v)
    worst = float(np.max(np.abs(d - expected)))
    verdict(7, "chaos/derivative link", worst <= 1e-12, f"max abs err {worst:.3e}", time.perf_counter() - t0, 5)


def test_transfer_principle(verdict):
    t0 = time.perf_counter()
    tr, p = _poisson()
    boxes = box_grid(1.0, 2, [UNIT])
    F = Coordinate(1.0) ** 2
    good = run_transfer_test(F, tr, p, 1.0, boxes, [0, 1, 2], 100_000, (8, 8))
    bad_backends = (CanonicalSampler(tr, p, 1.0), IncrementSampler(tr, p, 1.0, rate_scale=1.1))
    bad = run_transfer_test(F, tr, p, 1.0, boxes, [0, 1, 2], 100_000, (8, 8), backends=bad_backends)
    order0 = [row for row in bad.rows if row.order == 0]
    all_ok = all(row.z <= 3 for row in good.rows)
    control_fails = not bad.passed and not order0[0].passed
    detail = f"max z {good.max_z:.2f} on {len(good.rows)} rows; corrupted control order-0 z {order0[0].z:.1f}"
    verdict(8, "transfer principle", all_ok and control_fails, detail, time.perf_counter() - t0, 120)


def test_coefficient_ground_truth(verdict):
    t0 = time.perf_counter()
    tr, p = _poisson()
    sampler = CanonicalSampler(tr, p, 1.0)
    B = Rect(0.0, 1.0, UNIT)
    m = estimate_chaos_coefficient(lambda b: random_measure(b, tr, B), [B], sampler, 100_000, 9)
    c = estimate_chaos_coefficient(Const(3.0), [B], sampler, 100_000, 9)
    ok = abs(m.estimate - 1.0) <= 3 * m.stderr and abs(c.estimate) <= 3 * c.stderr
    detail = f"M(B): {m.estimate:.4f} +- {m.stderr:.4f}; const: {c.estimate:.4f} +- {c.stderr:.4f}"
    verdict(9, "coefficient ground truth", ok, detail, time.perf_counter() - t0, 30)


def test_cli_determinism(verdict, tmp_path, capsys):
    t0 = time.perf_counter()
    runs = [
        ("transfer", "poisson_transfer.json"),
        ("chaos", "poisson_transfer.json"),
        ("chain-check", "poisson_chain_check.json"),
    ]
    identical = True
    for suite, config in runs:
        seen = []
        for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
            out = tmp_path / suite / tag
            assert main([suite, "--config", str(CONFIGS / config), "--out", str(out), "--threads", threads]) == 0
            seen.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
        identical &= seen[0] == seen[1] == seen[2]
        identical &= json.loads(seen[0]["summary.json"])["seed"] is not None
    capsys.readouterr()
    verdict(10, "CLI determinism", identical, "byte-identical artifacts across repeats and --threads 1/4", time.perf_counter() - t0, 30)
