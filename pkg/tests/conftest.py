import numpy as np
import pytest

from fovdiff import linear_beta_schedule


@pytest.fixture(scope="session")
def schedule_1000():
    return linear_beta_schedule(1000)


@pytest.fixture(scope="session")
def schedule_100():
    return linear_beta_schedule(100)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
