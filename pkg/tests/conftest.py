"""Shared synthetic datasets; the expensive ones are built once per session."""

import numpy as np
import pytest

from scalex import synth
from scalex.data_model import ParametricParams
from scalex.fitting import multistart_fit, reduced_grid

TRUTH = synth.REFERENCE_PARAMS
TRUE_A = TRUTH.beta / (TRUTH.alpha + TRUTH.beta)

ISOFLOP_BUDGETS = np.geomspace(6e18, 3e21, 9)
ENVELOPE_SIZES = np.geomspace(1e7, 1e10, 15)


def roundtrip_points(params: ParametricParams = TRUTH, sigma: float = 0.0, seed: int = 0, n: int = 200):
    """``n`` points log-uniform over N in [1e7, 1e10] and D in [1e9, 1e12]."""
    rng = np.random.default_rng(seed)
    N = 10.0 ** rng.uniform(7, 10, n)
    D = 10.0 ** rng.uniform(9, 12, n)
    L = synth.gen_loss(params, N, D, sigma, rng)
    return np.column_stack([N, D, L])


@pytest.fixture(scope="session")
def noiseless_points():
    return roundtrip_points()


@pytest.fixture(scope="session")
def noisy_points():
    return roundtrip_points(sigma=0.01, seed=1)


@pytest.fixture(scope="session")
def noiseless_reduced_fit(noiseless_points):
    return multistart_fit(noiseless_points, grid=reduced_grid())


@pytest.fixture(scope="session")
def noisy_reduced_fit(noisy_points):
    return multistart_fit(noisy_points, grid=reduced_grid())


@pytest.fixture(scope="session")
def isoflop_suite():
    return synth.gen_isoflop_suite(TRUTH, ISOFLOP_BUDGETS, sizes_per_budget=7)


@pytest.fixture(scope="session")
def envelope_suite():
    return synth.gen_envelope_suite(TRUTH, ENVELOPE_SIZES)


# ------------------------------------------------------ acceptance report

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
