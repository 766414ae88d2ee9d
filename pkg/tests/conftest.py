import numpy as np
import pytest

from src.core.problem import PolyCost, PolyDynamics
from src.data.cache import artifact_cache

SQRT2 = np.sqrt(2.0)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running benchmark reproduction")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_cache():
    artifact_cache.clear()
    yield
    artifact_cache.clear()


@pytest.fixture
def scalar_lq():
    """x' = −x + u with Q = R = 1."""
    return PolyDynamics(A=[[-1.0]], B=[[1.0]]), PolyCost(Q=[[1.0]], R=[[1.0]])


@pytest.fixture
def scalar_quadratic_drift():
    """x' = −x + x² + u with Q = R = 1."""
    return PolyDynamics(A=[[-1.0]], B=[[1.0]], F={2: [[1.0]]}), PolyCost(Q=[[1.0]], R=[[1.0]])


@pytest.fixture
def scalar_cubic_cost():
    """x' = −x + u with the extra state cost ½x³."""
    return PolyDynamics(A=[[-1.0]], B=[[1.0]]), PolyCost(Q=[[1.0]], R=[[1.0]], q={3: [1.0]})


@pytest.fixture
def scalar_bilinear_input():
    """x' = −x + (1 + x)u."""
    return PolyDynamics(A=[[-1.0]], B=[[1.0]], G={1: [[1.0]]}), PolyCost(Q=[[1.0]], R=[[1.0]])
