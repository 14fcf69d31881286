import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pdplast import Collar, MaterialParams, build_grid, build_neighbor_table, make_kernel

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture(scope="session")
def grid16():
    return build_grid(2, (16, 16), (1.0, 1.0), Collar.frame(3))


@pytest.fixture(scope="session")
def table16(grid16):
    return build_neighbor_table(grid16, make_kernel("constant", 0.18, 2))


@pytest.fixture(scope="session")
def params():
    return MaterialParams(alpha=1.0, beta=10.0, gamma=1.0, sigma_y=0.05)
