import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pnnlab.dataset_service import CubicSpec, Dataset, gen_cubic
from pnnlab.network import Architecture, init_parameters
from pnnlab.numerics import Rng


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Keeps user settings out of the tests"""
    for name in ("PNNLAB_OUTPUT_ROOT", "PNNLAB_JOBS", "LOG_LEVEL", "LOG_FILE"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def small_arch():
    return Architecture(input_dim=3, depth=2, width=5)


@pytest.fixture
def small_params(small_arch):
    return init_parameters(small_arch, Rng(11))


@pytest.fixture
def cubic_pair():
    """Small cubic train/test datasets (20 x 5 and 10 x 5)"""
    train_rng, test_rng = Rng(3).split(2)
    train = gen_cubic(CubicSpec(n_unique=20, replicates=5, seed=3), train_rng)
    test = gen_cubic(CubicSpec(n_unique=10, replicates=5, seed=3), test_rng)
    return train, test


@pytest.fixture
def two_groups():
    """Inputs 0 and 1 with outputs {1, 3} and {5, 5, 5}"""
    return Dataset(
        inputs=np.array([[0.0], [0.0], [1.0], [1.0], [1.0]]),
        outputs=np.array([1.0, 3.0, 5.0, 5.0, 5.0]),
        group_key=np.array([0, 0, 1, 1, 1]),
    )

