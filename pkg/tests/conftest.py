import numpy as np
import pytest

from thevenin_id.model import nominal_params
from thevenin_id.synthetic import constant_discharge

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def nominal():
    return nominal_params()


@pytest.fixture
def times():
    return np.arange(2401.0)


@pytest.fixture
def noisy_dataset(nominal):
    return constant_discharge(nominal, seed=11, run_index=0)


@pytest.fixture
def clean_dataset(nominal):
    return constant_discharge(nominal, noise_variance=0.0)
