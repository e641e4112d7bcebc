import math

import numpy as np
import pytest

from conftest import draw_batch
from levymalliavin.canonical_path import CanonicalSampler
from levymalliavin.chaos import box_grid, random_measure
from levymalliavin.errors import BackendMismatch
from levymalliavin.functionals import Const, Coordinate, RunningSup
from levymalliavin.levy_model import ControlMeasure, FiniteDiscrete, LevyTriplet, Rect, build_partition
from levymalliavin.transfer import (
    IncrementSampler,
    TransferReport,
    TransferRow,
    backends_for,
    run_field_transfer_test,
    run_transfer_test,
)

UNIT = "(0.5, 1.5]"


def _poisson():
    nu = FiniteDiscrete([(1.0, 2.0)])
    tr = LevyTriplet(0.0, 0.0, nu)
    return tr, build_partition(nu, 4)


# -- rows and reports ---------------------------------------------------------


@pytest.mark.parametrize(
    "row, z",
    [
        (TransferRow(0, (), 1.0, 0.0, 1.0, 0.0), 0.0),
        (TransferRow(1, (0,), 1.0, 0.3, 1.4, 0.4), 0.8),
        (TransferRow(1, (0,), 1.0, 0.0, 1.0 + 1e-14, 0.0), 0.0),
        (TransferRow(1, (0,), 1.0, 0.0, 2.0, 0.0), math.inf),
    ],
)
def test_z_score(row, z):
    assert row.z == pytest.approx(z)
    assert row.passed == (z <= 3)


def test_report_allows_one_percent():
    good = [TransferRow(0, (), 0.0, 1.0, 0.0, 1.0)] * 99
    bad = [TransferRow(0, (), 0.0, 1.0, 10.0, 1.0)]
    assert TransferReport(good + bad, ("a", "b")).passed
    assert not TransferReport(good[:98] + bad * 2, ("a", "b")).passed
    assert TransferReport([], ("a", "b")).passed


def test_report_csv_and_summary():
    rep = TransferReport([TransferRow(2, (0, 1), 1.0, 0.1, 1.1, 0.1)], ("canonical", "increment"))
    lines = rep.to_csv(["seed=1"]).splitlines()
    assert lines[1] == "r,v,order,box_ids,c1,stderr1,c2,stderr2,z,pass"
    assert lines[2].startswith(",,2,0;1,")
    assert set(rep.summary()) == {"rows", "passed_rows", "max_z", "pass", "backends"}


# -- increment backend --------------------------------------------------------


def test_increment_sampler_law(mixed):
    tr, p, _ = mixed
    inc = IncrementSampler(tr, p, 2.0)
    batch = draw_batch(inc, 50_000, seed=3)
    counts = batch.counts()
    lam = p.total_mass * 2.0
    assert abs(counts.mean() - lam) <= 3 * math.sqrt(lam / len(counts))
    for i in range(200):
        om = batch.jump_list(i)
        for sec, jumps in zip(p.sectors, om.sectors):
            ts = [t for t, _ in jumps]
            assert all(a < b for a, b in zip(ts, ts[1:]))
            assert all(sec.set.contains(x) for _, x in jumps)
    cm = ControlMeasure(tr, 2.0, p)
    for B in [Rect(0, 1, "[-1, 0)"), Rect(0.5, 2, "(0.5, 2]")]:
        sq = random_measure(batch, tr, B) ** 2
        assert abs(sq.mean() - cm(B)) <= 3 * sq.std(ddof=1) / math.sqrt(len(sq))


def test_increment_sampler_continuous_sizes(stable):
    tr, p, _ = stable
    batch = draw_batch(IncrementSampler(tr, p, 1.0), 2000, seed=4)
    ref = draw_batch(CanonicalSampler(tr, p, 1.0), 2000, seed=4)
    assert abs(batch.counts().mean() - ref.counts().mean()) <= 4 * math.sqrt(2 * p.total_mass / 2000)
    for i in range(50):
        for sec, jumps in zip(p.sectors, batch.jump_list(i).sectors):
            assert all(sec.set.contains(x) for _, x in jumps)


def test_increment_sampler_long_rows():
    # tiny width budget relative to the realised count exercises the tail loop
    nu = FiniteDiscrete([(1.0, 0.01)])
    tr = LevyTriplet(0.0, 0.0, nu)
    p = build_partition(nu, 2)
    inc = IncrementSampler(tr, p, 1.0, rate_scale=3000.0)
    batch = draw_batch(inc, 200, seed=0)
    assert abs(batch.counts().mean() - 30.0) <= 3 * math.sqrt(30.0 / 200)


# -- transfer of coefficients -------------------------------------------------


def test_constant_matches_exactly():
    tr, p = _poisson()
    boxes = box_grid(1.0, 2, [UNIT])
    rep = run_transfer_test(Const(3.0), tr, p, 1.0, boxes, [0], 1000, (1, 2))
    (row,) = rep.rows
    assert (row.c1, row.se1, row.c2, row.se2, row.z) == (3.0, 0.0, 3.0, 0.0, 0.0)


def test_square_transfers():
    tr, p = _poisson()
    boxes = box_grid(1.0, 2, [UNIT])
    rep = run_transfer_test(Coordinate(1.0) ** 2, tr, p, 1.0, boxes, [0, 1, 2], 100_000, (5, 5))
    assert len(rep.rows) == 4 and rep.passed and all(r.passed for r in rep.rows)


def test_mis_specified_intensity_is_caught():
    tr, p = _poisson()
    boxes = box_grid(1.0, 2, [UNIT])
    bad = (CanonicalSampler(tr, p, 1.0), IncrementSampler(tr, p, 1.0, rate_scale=1.1))
    rep = run_transfer_test(Coordinate(1.0) ** 2, tr, p, 1.0, boxes, [0, 1, 2], 100_000, (5, 5), backends=bad)
    assert not rep.passed and rep.max_z > 3


def test_transfer_is_deterministic(mixed):
    tr, p, _ = mixed
    boxes = box_grid(2.0, 2, ["[-1, 0)"])
    F = RunningSup(2.0) + Coordinate(1.0)
    a = run_transfer_test(F, tr, p, 2.0, boxes, [0, 1], 4000, (3, 3), threads=1, chunk_size=1000)
    b = run_transfer_test(F, tr, p, 2.0, boxes, [0, 1], 4000, (3, 3), threads=2, chunk_size=1000)
    assert a.to_csv() == b.to_csv()


def test_backend_mismatch():
    tr, p = _poisson()
    other = LevyTriplet(0.0, 0.0, FiniteDiscrete([(1.0, 3.0)]))
    q = build_partition(other.nu, 4)
    boxes = box_grid(1.0, 1, [UNIT])
    with pytest.raises(BackendMismatch):
        run_transfer_test(Const(1.0), tr, p, 1.0, boxes, [0], 10, (0, 0), backends=backends_for(other, q, 1.0))
    with pytest.raises(BackendMismatch):
        mixed = (CanonicalSampler(tr, p, 1.0), IncrementSampler(tr, p, 2.0))
        run_transfer_test(Const(1.0), tr, p, 1.0, boxes, [0], 10, (0, 0), backends=mixed)


def test_orders_above_two_rejected():
    tr, p = _poisson()
    with pytest.raises(ValueError):
        run_transfer_test(Const(1.0), tr, p, 1.0, box_grid(1.0, 3, [UNIT]), [3], 10, (0, 0))


# -- transfer of the derivative field -----------------------------------------


def test_field_of_coordinate_is_one():
    tr, p = _poisson()
    boxes = box_grid(1.0, 2, [UNIT])
    grid = [(0.2, 1.0), (0.7, 1.0)]
    rep = run_field_transfer_test(Coordinate(1.0), tr, p, 1.0, grid, boxes, [0, 1], 2000, (1, 1))
    assert rep.passed
    for row in rep.rows:
        if row.order == 0:
            assert row.c1 == row.c2 == 1.0 and row.z == 0.0
        else:
            assert abs(row.c1) <= 3 * row.se1 and abs(row.c2) <= 3 * row.se2


def test_field_of_square_transfers():
    tr, p = _poisson()
    boxes = box_grid(1.0, 2, [UNIT])
    grid = [(0.25, 1.0), (0.75, 1.0)]
    rep = run_field_transfer_test(Coordinate(1.0) ** 2, tr, p, 1.0, grid, boxes, [0, 1], 50_000, (2, 2))
    assert rep.passed
    # D_{r,1} X^2 = 2 X + 1: mean 5, first coefficient 2 on every box
    for row in rep.rows:
        target = 5.0 if row.order == 0 else 2.0
        assert abs(row.c1 - target) <= 3 * row.se1 + 1e-12


def test_field_empty_grid():
    tr, p = _poisson()
    rep = run_field_transfer_test(Coordinate(1.0), tr, p, 1.0, [], box_grid(1.0, 1, [UNIT]), [0], 10, (0, 0))
    assert rep.rows == [] and rep.passed
