import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bridgebound.measures import Grid, GridKernel, GridMeasure

settings.register_profile(
    "bridgebound", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("bridgebound")


def random_measure(rng, grid, alpha=1.0):
    return GridMeasure(grid, rng.dirichlet(np.full(grid.size, alpha)))


def random_kernel(rng, source, target, alpha=1.0):
    return GridKernel(source, target, rng.dirichlet(np.full(target.size, alpha), size=source.size))


def random_spd(rng, d, lo=0.3, hi=2.0):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q @ np.diag(rng.uniform(lo, hi, size=d)) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def line5():
    return Grid(np.arange(5.0))
