import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20211026)


def random_simplex(rng, K):
    return rng.dirichlet(np.ones(K))
