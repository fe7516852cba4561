import numpy as np
import pytest

from heisenberg_ibp.group import OmegaForm
from heisenberg_ibp.paths import CMPath, TimeGrid, sample_wiener


@pytest.fixture
def omega():
    return OmegaForm.standard(2, 1)


@pytest.fixture
def grid():
    return TimeGrid(1.0, 64)


@pytest.fixture
def noise(grid):
    return sample_wiener(grid, 2, 1, seed=7, size=50)


def random_cm(grid, d=2, N=1, seed=0, scale=1.0):
    """Smooth random CM path: a few sine modes in each coordinate."""
    rng = np.random.default_rng(seed)
    amp = scale * rng.standard_normal((3, d + N))
    freq = np.arange(1, 4)

    def fn(t):
        vals = np.sin(np.pi * np.outer(t, freq) / grid.T) @ amp
        return vals[:, :d], vals[:, d:]
    return CMPath.from_function(grid, fn)


@pytest.fixture
def cm_factory(grid):
    return lambda seed=0, scale=1.0, d=2, N=1: random_cm(grid, d, N, seed, scale)
