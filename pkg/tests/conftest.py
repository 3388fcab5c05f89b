import numpy as np
import pytest

from barrierlab.geometry import Annulus


@pytest.fixture
def annulus():
    return Annulus((0.0, 0.0), 1.0, 2.0)


@pytest.fixture
def step_data():
    """Dirichlet data 0 on the inner circle, 1 on the outer one."""
    return lambda x: np.where(np.linalg.norm(x, axis=1) < 1.5, 0.0, 1.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
