import sys
from pathlib import Path

import numpy as np
import pytest

from swiptnoma.netmodel import Scenario, generate_instance

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def default_instance():
    return generate_instance(Scenario(), 0)


@pytest.fixture(scope="session")
def tiny_scenario():
    return Scenario().with_overrides(n_cells=1, pairs_per_cell=1, antennas=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_beams(rng, shape, power=1.0):
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return w * np.sqrt(power / np.sum(np.abs(w) ** 2, axis=tuple(range(1, len(shape))), keepdims=True))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
