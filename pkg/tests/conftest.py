import numpy as np
import pytest

from lorentzlab import get_chart


@pytest.fixture(scope="session")
def mink():
    return get_chart("minkowski2d")


@pytest.fixture(scope="session")
def cyl():
    return get_chart("product_r_s1")


@pytest.fixture(scope="session")
def ds():
    return get_chart("desitter2d")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
