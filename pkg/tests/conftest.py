import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

import numpy as np
import pytest

from core.funclass.hard_function import sample_hard_function
from core.instances.gambler import GamblerSystem
from core.instances.stable import make_stable_instance
from core.simkit.dataset import sample_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def hard_g():
    return sample_hard_function(2, 2, 0.25, np.random.default_rng(7))


@pytest.fixture
def stable_inst(hard_g):
    return make_stable_instance(hard_g, i=1, omega=1, mu=0.125, tau=0.1, delta=0.01)


@pytest.fixture
def stable_data(stable_inst):
    return sample_dataset(stable_inst, 64, 8, np.random.default_rng(11))


@pytest.fixture
def gambler():
    return GamblerSystem(1.5, xi=1, eps0=0.01)


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("COMPBENCH_OUT", str(tmp_path / "runs"))
    return tmp_path / "runs"
