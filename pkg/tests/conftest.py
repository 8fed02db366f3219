import numpy as np
import pytest

from zklab.grid import new_grid
from zklab.spectrum import compute_spectrum
from zklab.waves import FamilyCache

C_CRIT = 3.2  # 4 n^2 / 5 with n = 2, L = 1


@pytest.fixture(scope="session")
def grid():
    return new_grid(256, 8, 30.0, 1.0)


@pytest.fixture(scope="session")
def fine_grid():
    return new_grid(512, 8, 30.0, 1.0)


@pytest.fixture(scope="session")
def wide_grid():
    # wide box: the unstable eigenfunction has a slowly decaying left tail
    return new_grid(512, 8, 60.0, 1.0)


@pytest.fixture(scope="session")
def spectrum(grid):
    return compute_spectrum(1.0, grid)


@pytest.fixture(scope="session")
def wide_spectrum(wide_grid):
    return compute_spectrum(1.0, wide_grid)


@pytest.fixture(scope="session")
def crit_grid():
    return new_grid(192, 16, 20.0, 1.0)


@pytest.fixture(scope="session")
def crit_family(crit_grid):
    return FamilyCache(C_CRIT, crit_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one verdict line per acceptance criterion, collected by test_acceptance
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
