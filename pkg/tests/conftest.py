import time

import numpy as np
import pytest

from boundary_bubble.core_math import ProblemParams
from boundary_bubble.correction import solve_reduced_bvp
from boundary_bubble.forms import TraceFreeForm


def unit_diag_form(n=7):
    h = np.zeros((n - 1, n - 1))
    h[0, 0], h[1, 1] = 1 / np.sqrt(2), -1 / np.sqrt(2)
    return TraceFreeForm(h)


@pytest.fixture(scope="session")
def coarse():
    return ProblemParams(n_r=64, n_t=64)


@pytest.fixture(scope="session")
def medium():
    return ProblemParams(n_r=150, n_t=150)


@pytest.fixture(scope="session")
def unit_form():
    return unit_diag_form()


@pytest.fixture(scope="session")
def coarse_profile(coarse, unit_form):
    return solve_reduced_bvp(coarse, unit_form)


@pytest.fixture(scope="session")
def medium_profile(medium, unit_form):
    return solve_reduced_bvp(medium, unit_form)


@pytest.fixture(scope="session")
def fine_profile(unit_form):
    """The production 600 x 600 graded solve; shared across modules."""
    t0 = time.perf_counter()
    prof = solve_reduced_bvp(ProblemParams(), unit_form)
    TIMINGS["fine_solve"] = time.perf_counter() - t0
    return prof


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_LINES = []
TIMINGS = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
