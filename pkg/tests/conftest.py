import functools

import numpy as np
import pytest

from logplap.assembly import Constants, assemble_form
from logplap.grid import GridFunction, build_grid


@functools.lru_cache(maxsize=None)
def form_for(a=0.0, b=1.0, n=64, p=2.0, C=1.0, rho=0.0):
    return assemble_form(build_grid(a, b, n), Constants(C, rho, p))


def random_function(grid, rng, floor=0.0):
    """Random nodal values; ``floor`` keeps every |u_i| above it."""
    v = rng.standard_normal(grid.n)
    if floor:
        v = np.sign(v) * (floor + np.abs(v))
    return GridFunction(grid, v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
