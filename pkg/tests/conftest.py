import warnings

import numpy as np
import pytest

from fpqsolve import Axis, BoundaryCondition, assemble, build_grid, double_well_1d, eval_coefficients, spiral_2d
from fpqsolve._exceptions import MeshBoundWarning


def random_conserving(n, rng, scale=1.0):
    """Dense generator with uniform(0, scale) rates and zero column sums."""
    R = rng.uniform(0, scale, (n, n))
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=0))
    return R


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid1d():
    return build_grid([Axis("x", -2.0, 2.0, 21)])


@pytest.fixture(scope="session")
def grid2d():
    return build_grid([Axis("x", -2.0, 2.0, 21), Axis("y", -2.0, 2.0, 21)])


@pytest.fixture(scope="session")
def dw_fd(grid1d):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MeshBoundWarning)
        return assemble(eval_coefficients(double_well_1d(0.5, 0.15), grid1d), "finite_difference")


@pytest.fixture(scope="session")
def dw_rates(grid1d):
    return assemble(eval_coefficients(double_well_1d(0.5, 0.15), grid1d), "rates")


@pytest.fixture(scope="session")
def spiral_rates(grid2d):
    return assemble(eval_coefficients(spiral_2d(0.1, 0.15), grid2d), "rates", BoundaryCondition())


@pytest.fixture(scope="session")
def delta0():
    p = np.zeros(21)
    p[10] = 1.0
    return p


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
