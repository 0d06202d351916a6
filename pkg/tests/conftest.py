import numpy as np
import pytest

from vortex.spectral import SpectralGrid


@pytest.fixture
def grid16():
    return SpectralGrid(16)


@pytest.fixture
def grid32():
    return SpectralGrid(32)


@pytest.fixture
def grid64():
    return SpectralGrid(64)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
