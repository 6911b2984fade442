import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stochprandtl.fields import Grid
from stochprandtl.harness.corpus import random_field
from stochprandtl.noise import make_rng

settings.register_profile("repo", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def grid():
    return Grid(Nx=16, Ny=64, Ly=6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def field_factory(grid):
    def make(seed=0, kmax=3, amplitude=1.0, g=None):
        return random_field(g or grid, make_rng(seed, 7), kmax, amplitude)
    return make
