import math

import numpy as np
import pytest

from oumaxlab.harness import EmpiricalDistribution, ks_statistic


def ks(samples, cdf) -> float:
    return ks_statistic(EmpiricalDistribution(samples), cdf)


def within_se(estimate, target, se, k=3.0) -> bool:
    return abs(estimate - target) <= k * se


@pytest.fixture
def rng0():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo test")


SQRT_2PI = math.sqrt(2 * math.pi)
