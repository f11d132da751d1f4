import numpy as np
import pytest

from robustblock import BlockLayout, CorrelationModel, NeighbourhoodSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def ex1_layout():
    return BlockLayout(7, 2)


@pytest.fixture
def ex2_layout():
    return BlockLayout(3, 5)


@pytest.fixture
def ex2_spec():
    return NeighbourhoodSpec(CorrelationModel.nn(0.2), 0.2)
