import numpy as np
import pytest

from spectral_grid import Grid3D
from dipolar_kernel import ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return Grid3D.cubic(32, 16.0)


@pytest.fixture
def grid():
    return Grid3D.cubic(64, 16.0)


@pytest.fixture
def params_a1():
    return ModelParams(lambda1=1.0, lambda2=0.1, lambda3=1.0, p=5.0)


@pytest.fixture
def params_a2():
    return ModelParams(lambda1=1.0, lambda2=-0.1, lambda3=1.0, p=5.0)


@pytest.fixture
def params_a3():
    return ModelParams(lambda1=0.0, lambda2=1.0, lambda3=1.0, p=5.0)


@pytest.fixture
def params_a4():
    return ModelParams(lambda1=0.0, lambda2=-1.0, lambda3=1.0, p=5.0)
