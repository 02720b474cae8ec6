import numpy as np
import pytest

from sparse3s.bsb import CooMatrix


def random_coo(rng, n, density, n_cols=None):
    n_cols = n if n_cols is None else n_cols
    return CooMatrix.from_dense(rng.random((n, n_cols)) < density)


def random_qkv(rng, n, d, scale=1.0):
    return tuple(rng.uniform(-scale, scale, (n, d)).astype(np.float16) for _ in range(3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def identity16():
    return CooMatrix.from_entries(16, 16, [(i, i) for i in range(16)])
