import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levymalliavin.errors import EmptyPartition, NonIntegrable
from levymalliavin.levy_model import (
    ControlMeasure,
    FiniteDiscrete,
    Interval,
    IntervalSet,
    LevyTriplet,
    Rect,
    TruncatedStable,
    TwoSidedExponential,
    build_partition,
    closed_form_moment,
    control_measure,
    jump_measure_from_dict,
    nu_mass,
    nu_moment,
    parse_interval,
)

MEASURES = [
    FiniteDiscrete([(1.0, 2.0), (-0.5, 3.0), (0.05, 1.0)]),
    TwoSidedExponential(1.5, 0.4, 1.0, 0.7),
    TruncatedStable(0.5, 1.0, 0.01),
    TruncatedStable(1.2, 0.7, 0.0, 4.0),
]


# -- nu_mass ------------------------------------------------------------------


@pytest.mark.parametrize(
    "A, expected",
    [("(0.5, 1.5]", 2.0), ("(2, 3]", 0.0), ("[1, 1]", 2.0), ("(1, 2]", 0.0)],
)
def test_nu_mass_atoms(A, expected):
    assert nu_mass(FiniteDiscrete([(1.0, 2.0)]), A) == expected


def test_nu_mass_stable_matches_antiderivative():
    # int_{0.01}^{1} x^{-1.5} dx = [-2 x^{-1/2}] = 2 (10 - 1)
    nu = TruncatedStable(0.5, 1.0, 0.01)
    got = nu_mass(nu, "[0.01, 1]")
    assert got == pytest.approx(18.0, rel=1e-10)


@pytest.mark.parametrize("nu", MEASURES[1:], ids=["exp", "stable_cut", "stable_xmax"])
@pytest.mark.parametrize("p", [0, 1, 2])
@pytest.mark.parametrize("A", ["(0.1, 0.9]", "[-2.5, -0.3)", "(0.02, 0.05]", "[1, 3]"])
def test_quadrature_matches_closed_form(nu, p, A):
    q = nu_moment(nu, A, p)
    c = closed_form_moment(nu, A, p)
    assert q == pytest.approx(c, rel=1e-10, abs=1e-13)


def test_exponential_totals():
    nu = TwoSidedExponential(1.5, 0.4, 1.0, 0.7)
    assert nu_mass(nu, "(-inf, inf)") == pytest.approx(2.5, rel=1e-10)
    assert nu_moment(nu, "(0, inf)", 1) == pytest.approx(1.5 * 0.4, rel=1e-10)
    assert nu_moment(nu, "(-inf, 0)", 2) == pytest.approx(2 * 1.0 * 0.7**2, rel=1e-10)


def test_infinite_activity_touching_zero():
    nu = TruncatedStable(0.8, 1.0, 0.0)
    with pytest.raises(NonIntegrable):
        nu_mass(nu, "(0, 1]")
    # second moment is finite there: 2 * eps^{2 - alpha} / (2 - alpha) per side
    assert nu_moment(nu, "(0, 0.1]", 2) == pytest.approx(0.1**1.2 / 1.2, rel=1e-9)


# -- triplet ------------------------------------------------------------------


def test_triplet_validation_and_round_trip():
    with pytest.raises(ValueError):
        LevyTriplet(0.0, -1.0, FiniteDiscrete([(1.0, 1.0)]))
    for nu in MEASURES:
        tr = LevyTriplet(0.3, 0.0, nu)
        assert LevyTriplet.from_dict(tr.to_dict()) == tr
        assert jump_measure_from_dict(nu.to_dict()) == nu


def test_stable_alpha_range():
    with pytest.raises(ValueError):
        TruncatedStable(2.0, 1.0, 0.1)


# -- partition ----------------------------------------------------------------


def test_single_big_atom_partition():
    p = build_partition(FiniteDiscrete([(1.5, 2.0)]), 3)
    assert len(p.sectors) == 1
    s = p.sectors[0]
    assert (s.k, s.mass, s.drift, s.quad, s.compensated) == (1, 2.0, 3.0, 4.5, False)


def test_two_atom_partition():
    p = build_partition(FiniteDiscrete([(0.3, 1.0), (2.0, 1.0)]), 4)
    assert [s.mass for s in p.sectors] == [1.0, 1.0]
    assert [s.k for s in p.sectors] == [1, 2]
    assert p.locate(0.3) == 1 and p.locate(2.0) == 0
    assert p.sectors[1].set.contains(0.3) and p.sectors[1].compensated
    # 0.3 lies in the shell [1/4, 1/2)
    assert p.sectors[1].set.contains(0.25) and not p.sectors[1].set.contains(0.5)


def test_unit_atom_is_uncompensated():
    p = build_partition(FiniteDiscrete([(1.0, 2.0)]), 4)
    assert len(p.sectors) == 1 and not p.sectors[0].compensated
    assert p.compensator == 0.0


def test_empty_partition():
    with pytest.raises(EmptyPartition):
        build_partition(FiniteDiscrete([]), 4)
    p = build_partition(FiniteDiscrete([]), 4, allow_empty=True)
    assert p.sectors == () and p.compensator == 0.0


@pytest.mark.parametrize("K", [1, 2, 5, 8, 12])
def test_stable_masses_sum_to_covered_mass(K):
    nu = TruncatedStable(0.8, 1.0, 0.0, 3.0)
    p = build_partition(nu, K, 1e-3)
    # symmetric density |x|^{-1.8} on [lower, 3], both sides
    a = p.lower_bound
    expected = 2 * (a**-0.8 - 3.0**-0.8) / 0.8
    assert math.fsum(s.mass for s in p.sectors) == pytest.approx(expected, rel=1e-10)
    assert p.total_mass == pytest.approx(nu_mass(nu, p.covered), rel=1e-10)


@pytest.mark.parametrize("nu", MEASURES, ids=["atoms", "exp", "stable_cut", "stable_xmax"])
@pytest.mark.parametrize("K", [1, 3, 8])
def test_partition_invariants(nu, K):
    p = build_partition(nu, K, 1e-3)
    quad = math.fsum(s.quad for s in p.sectors)
    assert quad == pytest.approx(closed_form_moment(nu, p.covered, 2), rel=1e-10, abs=1e-14)
    for i, a in enumerate(p.sectors):
        assert a.mass > 0 and math.isfinite(a.mass)
        assert a.compensated == (not a.set.contains(1.0))
        bound = max(max(abs(iv.lo), abs(iv.hi)) for iv in a.set)
        if math.isfinite(bound):
            assert abs(a.drift) <= bound * a.mass * (1 + 1e-12)
        for b in p.sectors[i + 1 :]:
            assert a.set.is_disjoint(b.set)
    assert [s.k for s in p.sectors] == list(range(1, len(p.sectors) + 1))


def test_small_jump_variance_reported():
    nu = TruncatedStable(0.8, 1.0, 0.0)
    p = build_partition(nu, 20, 1e-3)
    assert p.small_jump_variance == pytest.approx(2 * (1e-3) ** 1.2 / 1.2, rel=1e-9)


# -- control measure ----------------------------------------------------------


@pytest.mark.parametrize(
    "atoms, rect, expected",
    [
        ([(1.0, 2.0)], Rect(0, 1, "(0.5, 1.5]"), 2.0),
        ([(1.0, 2.0)], Rect(0, 1, "(2, 3]"), 0.0),
        ([(1.0, 2.0), (-0.5, 3.0)], Rect(0, 2, "[-1, -0.1]"), 1.5),
    ],
)
def test_control_measure_examples(atoms, rect, expected):
    cm = ControlMeasure(LevyTriplet(0.0, 0.0, FiniteDiscrete(atoms)), 2.0)
    assert control_measure(cm, rect) == pytest.approx(expected, rel=1e-15)


def test_control_measure_gaussian_atom():
    cm = ControlMeasure(LevyTriplet(0.0, 0.5, FiniteDiscrete([(1.0, 2.0)])), 1.0)
    assert cm(Rect(0, 1, "[-0.1, 0.1]")) == pytest.approx(0.25)
    assert cm(Rect(0, 1, "(0, 0.1]")) == 0.0


@given(
    cuts_t=st.lists(st.floats(0.01, 0.99), min_size=0, max_size=4, unique=True),
    cuts_x=st.lists(st.floats(0.06, 2.9), min_size=0, max_size=4, unique=True),
    which=st.sampled_from(range(len(MEASURES))),
)
def test_control_measure_additive(cuts_t, cuts_x, which):
    nu = MEASURES[which]
    cm = ControlMeasure(LevyTriplet(0.0, 0.0, nu), 1.0)
    ts = [0.0] + sorted(cuts_t) + [1.0]
    xs = [0.05] + sorted(cuts_x) + [3.0]
    whole = cm(Rect(0, 1, IntervalSet([Interval(0.05, 3.0)])))
    parts = [
        cm(Rect(ts[i], ts[i + 1], IntervalSet([Interval(xs[j], xs[j + 1])])))
        for i in range(len(ts) - 1)
        for j in range(len(xs) - 1)
    ]
    assert math.fsum(parts) == pytest.approx(whole, rel=1e-12, abs=1e-15)


# -- interval helpers ---------------------------------------------------------


@pytest.mark.parametrize("text", ["(0.5, 1.5]", "[-1, -0.1]", "(-inf, 2)", "[0, inf)"])
def test_interval_round_trip(text):
    assert parse_interval(str(parse_interval(text))) == parse_interval(text)


def test_interval_contains_vectorised():
    iv = parse_interval("(0.5, 1.5]")
    np.testing.assert_array_equal(iv.contains(np.array([0.5, 1.0, 1.5, 2.0])), [False, True, True, False])
