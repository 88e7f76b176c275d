import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within(result, target, z=4.0):
    """Mean within ``z`` standard errors of ``target``."""
    return abs(result.mean - target) < z * result.stderr
