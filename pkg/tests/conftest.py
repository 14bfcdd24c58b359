import numpy as np
import pytest

from sparsediff import experiments as ex

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def five_node():
    """The 5-node, 5-tap validation spec with a small trial budget."""
    return ex.scenario_43(trials=4, iterations=400)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
