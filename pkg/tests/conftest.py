import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from penlab.scenario import Dataset, make_scenario

settings.register_profile(
    "penlab", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("penlab")


@pytest.fixture(scope="session")
def x1():
    return make_scenario("X1-005")


@pytest.fixture(scope="session")
def s01():
    return make_scenario("S0-1")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def four_points():
    """Sorted x, hand-checkable responses."""
    return Dataset(np.array([0.1, 0.3, 0.6, 0.8]), np.array([1.0, 2.0, 3.0, 6.0]))
