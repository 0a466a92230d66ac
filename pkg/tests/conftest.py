import numpy as np
import pytest

from boltzdef.rbm import Rbm


def random_rbm(num_visible, num_hidden, seed, scale=0.8):
    rng = np.random.default_rng(seed)
    return Rbm(
        rng.normal(0.0, scale, size=(num_visible, num_hidden)),
        rng.normal(0.0, scale, size=num_visible),
        rng.normal(0.0, scale, size=num_hidden),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
