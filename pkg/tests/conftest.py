import numpy as np
import pytest

from ncsaga.problems import LinearModelProblem, RegularizerParams


def small_linear(n=8, d=3, seed=0, lam=0.001, alpha=1.0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return LinearModelProblem(Z, y, RegularizerParams(lam, alpha))


@pytest.fixture
def linear8():
    return small_linear()
