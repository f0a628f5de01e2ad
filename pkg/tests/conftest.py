import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bangbang_heat import Grid1D, RegionMask, TimeGrid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance criteria record one line each; printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def standard():
    """n = 99, omega = (0.3, 0.7), T = 0.5 with 250 steps, y0 = sin(pi x)."""
    grid = Grid1D(99)
    return {
        "grid": grid,
        "tgrid": TimeGrid(0.5, 250),
        "omega": RegionMask(grid, (0.3, 0.7)),
        "y0": np.sin(np.pi * grid.node_coords),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
