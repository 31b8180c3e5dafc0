import numpy as np
import pytest
import torch

from deforest_seg.dataset import Sensor
from deforest_seg.synthetic import write_fixture

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def s1_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("s1")
    return write_fixture(root, Sensor.SENTINEL1, 4, seed=3, n_locations=2)


@pytest.fixture(scope="session")
def l8_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("l8")
    return write_fixture(root, Sensor.LANDSAT8, 4, seed=5, n_locations=2)
