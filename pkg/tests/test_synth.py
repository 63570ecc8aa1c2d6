import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from scalex import synth
from scalex.approaches import closed_form_frontier
from scalex.data_model import ParametricParams

P = synth.REFERENCE_PARAMS


def test_gen_loss_limits_and_value():
    assert synth.gen_loss(P, 1e300, 1e300) == pytest.approx(1.69, abs=1e-12)
    expected = 1.69 + 406.4 / 1e9**0.34 + 410.7 / 2.02e10**0.28
    assert synth.gen_loss(P, 1e9, 2.02e10) == pytest.approx(expected, rel=1e-14)
    assert math.floor(synth.gen_loss(P, 1e9, 2.02e10) * 1000) / 1000 == 2.578


@settings(max_examples=100)
@given(st.floats(1.0, 1e15), st.floats(1.0, 1e15))
def test_gen_loss_exceeds_E(n, d):
    assert synth.gen_loss(P, n, d) > P.E


def test_gen_loss_noise_is_seeded_and_lognormal():
    a = synth.gen_loss(P, np.full(20000, 1e9), 2e10, 0.05, 7)
    b = synth.gen_loss(P, np.full(20000, 1e9), 2e10, 0.05, 7)
    np.testing.assert_array_equal(a, b)
    eps = np.log(a / synth.gen_loss(P, 1e9, 2e10))
    assert eps.std() == pytest.approx(0.05, rel=0.03)
    assert abs(eps.mean()) < 0.002
    with pytest.raises(ValueError):
        synth.gen_loss(P, 1e9, 1e9, -0.1)


def test_golden_section_quadratic():
    assert synth.golden_section(lambda x: (x - 1.234) ** 2, -10, 10) == pytest.approx(1.234, abs=1e-9)


def test_optimal_size_matches_closed_form_over_budgets():
    cf = closed_form_frontier(P)
    for c in np.geomspace(1e15, 1e27, 50):
        assert synth.optimal_size(P, c) == pytest.approx(cf.G * (c / 6) ** cf.a, rel=1e-6)


def test_optimal_size_matches_reference_minimiser():
    for c in (1e18, 5.76e23):
        f = lambda u: P.A * math.exp(-P.alpha * u) + P.B * (6 * math.exp(u) / c) ** P.beta
        ref = minimize_scalar(f, bracket=(10, 30), tol=1e-12).x
        assert math.log(synth.optimal_size(P, c)) == pytest.approx(ref, abs=1e-5)


@settings(max_examples=30)
@given(st.floats(0.1, 1.0), st.floats(10.0, 1000.0), st.floats(1e16, 1e26))
def test_symmetric_case_is_square_root(ab, AB, c):
    params = ParametricParams(1.0, AB, AB, ab, ab)
    assert synth.optimal_size(params, c) == pytest.approx(math.sqrt(c / 6), rel=1e-6)


def test_optimal_tokens_inverts_optimal_size():
    for n in (1e8, 1e9, 7e10):
        d = synth.optimal_tokens(P, n)
        assert synth.optimal_size(P, 6 * n * d) == pytest.approx(n, rel=1e-6)


def test_gen_run_construction():
    run = synth.gen_run(P, 10**8, 1e10, n_points=30)
    assert run.points[-1] == (1e10, synth.gen_loss(P, 10**8, 1e10))
    pen = synth.gen_run(P, 10**8, 1e10, n_points=30, cycle_mismatch_penalty=0.2)
    matched = synth.gen_loss(P, 10**8, pen.tokens)
    assert np.all(pen.losses[:-1] > matched[:-1])
    assert pen.losses[-1] == pytest.approx(matched[-1], rel=1e-15)


@pytest.mark.parametrize("penalty", [0.0, 0.1, 0.25, 0.5])
@pytest.mark.parametrize("n", [1e7, 1e8, 1e9, 1e10])
def test_gen_run_monotone_sweep(penalty, n):
    for d_max in np.geomspace(1e8, 1e13, 6):
        run = synth.gen_run(P, int(n), d_max, n_points=60, cycle_mismatch_penalty=penalty)
        assert np.all(np.diff(run.losses) <= 0)


def test_isoflop_suite_minimum_at_nearest_size():
    budgets = np.geomspace(1e18, 1e22, 5)
    pts = np.array(synth.gen_isoflop_suite(P, budgets, sizes_per_budget=8))
    for k, c in enumerate(budgets):
        block = pts[8 * k : 8 * (k + 1)]
        np.testing.assert_allclose(6 * block[:, 0] * block[:, 1], c, rtol=1e-12)
        n_star = synth.optimal_size(P, c)
        nearest = np.argmin(np.abs(np.log(block[:, 0] / n_star)))
        assert np.argmin(block[:, 2]) == nearest


def test_suites_are_seed_deterministic():
    a = synth.gen_isoflop_suite(P, [1e19, 1e20], rng_seed=3, log_noise_sigma=0.01)
    b = synth.gen_isoflop_suite(P, [1e19, 1e20], rng_seed=3, log_noise_sigma=0.01)
    assert a == b
    r1 = synth.gen_envelope_suite(P, [1e8, 1e9], rng_seed=4, log_noise_sigma=0.01)
    r2 = synth.gen_envelope_suite(P, [1e8, 1e9], rng_seed=4, log_noise_sigma=0.01)
    assert r1 == r2


def test_envelope_suite_horizons():
    runs = synth.gen_envelope_suite(P, [1e8])
    assert len(runs) == 4
    horizons = [r.tokens[-1] for r in runs]
    assert horizons[-1] / horizons[0] == pytest.approx(16.0)
    assert horizons[0] == pytest.approx(0.25 * synth.optimal_tokens(P, 1e8))
