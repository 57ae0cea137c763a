import numpy as np
import pytest

from slowmap import linear_example, simulate
from slowmap.sde import SdeSystem


@pytest.fixture(scope="session")
def linear():
    return linear_example()


@pytest.fixture(scope="session")
def linear_traj(linear):
    return simulate(linear, [0.0, 0.0], 1e-4, 3000, seed=0)


@pytest.fixture(scope="session")
def brownian():
    """Zero drift, slow row plus fast row with epsilon = 1e-3."""
    return SdeSystem(drift=np.zeros_like, dim=2, slow_count=1, epsilon=1e-3, name="brownian")


def pytest_terminal_summary(terminalreporter):
    import acceptance_report
    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_report.LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
