import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levymalliavin.levy_model import (
    FiniteDiscrete,
    LevyTriplet,
    TruncatedStable,
    TwoSidedExponential,
    build_partition,
)
from levymalliavin.canonical_path import CanonicalSampler

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def poisson():
    """nu = 2 delta_1, no drift, no Gaussian part, horizon 1."""
    nu = FiniteDiscrete([(1.0, 2.0)])
    triplet = LevyTriplet(0.0, 0.0, nu)
    partition = build_partition(nu, 4)
    return triplet, partition, CanonicalSampler(triplet, partition, 1.0)


@pytest.fixture
def mixed():
    """Atoms in S_1 and in two shells, with a nonzero drift."""
    nu = FiniteDiscrete([(1.5, 0.7), (-0.3, 2.0), (0.6, 1.1)])
    triplet = LevyTriplet(0.25, 0.0, nu)
    partition = build_partition(nu, 6)
    return triplet, partition, CanonicalSampler(triplet, partition, 2.0)


@pytest.fixture
def stable():
    nu = TruncatedStable(0.8, 1.0, 0.0, 3.0)
    triplet = LevyTriplet(0.1, 0.0, nu)
    partition = build_partition(nu, 5, 0.02)
    return triplet, partition, CanonicalSampler(triplet, partition, 1.0)


@pytest.fixture
def exponential():
    nu = TwoSidedExponential(1.5, 0.4, 1.0, 0.7)
    triplet = LevyTriplet(-0.2, 0.0, nu)
    partition = build_partition(nu, 6)
    return triplet, partition, CanonicalSampler(triplet, partition, 1.0)


@pytest.fixture
def model(request):
    return request.getfixturevalue(request.param)


def draw_batch(sampler, n, seed=0):
    return sampler.sample(np.random.SeedSequence(seed), n)
