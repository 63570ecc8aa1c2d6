"""Acceptance criteria, each at its stated tolerance.

Every criterion emits one ``PASS``/``FAIL`` line; the lines are collected
into an "acceptance criteria" section of the pytest terminal summary.
"""

import math
import sys
from contextlib import contextmanager

import numpy as np
import pytest

from scalex import approaches, flops, frontier, synth
from scalex.data_model import Diagnostics, FrontierPoint, ModelShape
from scalex.fitting import ParametricObjective, default_grid, multistart_fit, reduced_grid

from conftest import ACCEPTANCE_LINES, ENVELOPE_SIZES, ISOFLOP_BUDGETS, TRUE_A, TRUTH, roundtrip_points


@contextmanager
def criterion(number: int, title: str):
    """Record a PASS/FAIL line for the enclosed checks; ``rec["detail"]`` is appended."""
    rec = {"detail": ""}
    try:
        yield rec
    except BaseException as exc:
        why = rec["detail"] or f"{type(exc).__name__}: {exc}"
        _emit(number, title, False, why)
        raise
    _emit(number, title, True, rec["detail"])


def _emit(number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line, file=sys.stderr)


def rel(x, y):
    return abs(x - y) / abs(y)


# ---------------------------------------------------------------------------


def test_criterion_1_closed_form_frontier():
    with criterion(1, "closed-form frontier from published constants") as rec:
        cf = approaches.closed_form_frontier(TRUTH)
        rec["detail"] = f"a={cf.a:.4f} b={cf.b:.4f} G={cf.G:.5f}"
        assert cf.a == pytest.approx(0.4516, abs=0.01)
        assert cf.b == pytest.approx(0.5484, abs=0.01)


def test_criterion_2_budget_table_rows():
    with criterion(2, "budget table reproduces published 400M and 1B rows") as rec:
        fit = approaches.frontier_fit(TRUTH, Diagnostics(0, 0.0, 0.0))
        rows = frontier.budget_table(fit, [4e8, 1e9])
        published = [(2.21e19, 9.2e9), (1.62e20, 2.71e10)]
        errs = [(rel(r.flops, c), rel(r.tokens, d)) for r, (c, d) in zip(rows, published)]
        identity = max(rel(6 * r.n_params * r.tokens, r.flops) for r in rows)
        rec["detail"] = (
            "; ".join(
                f"N={r.n_params:.0e}: C={r.flops:.3g} ({ec:+.0%}) D={r.tokens:.3g} ({ed:+.0%})"
                for r, (ec, ed) in zip(rows, errs)
            )
            + f"; max 6ND identity error {identity:.1e}"
        )
        assert identity <= 1e-12
        assert all(ec <= 0.15 and ed <= 0.15 for ec, ed in errs)


def test_criterion_3_flops_accounting():
    with criterion(3, "FLOPs accounting and published FLOPs ratios") as rec:
        tiny = flops.forward_flops(ModelShape(1, 2, 8, 1, 2, vocab_size=4, seq_len=2))
        big = ModelShape(n_layers=40, d_model=3584, ffw_size=14336, key_size=128, n_heads=28)
        small = ModelShape(n_layers=10, d_model=640, ffw_size=2560, key_size=64, n_heads=10)
        r_big = flops.flop_ratio(big, 6.796e9, flops.EXCLUDE_EMBEDDINGS)
        r_small = flops.flop_ratio(small, 73e6, flops.EXCLUDE_EMBEDDINGS)
        sweep = []
        for n, shape, published in flops.reference_flop_ratios():
            hits = [
                tag
                for tag, policy in (("incl", flops.INCLUDE_EMBEDDINGS), ("excl", flops.EXCLUDE_EMBEDDINGS))
                if abs(flops.flop_ratio(shape, n, policy) - published) <= 0.05
            ]
            sweep.append(f"{n / 1e6:.0f}M:{'+'.join(hits) or 'none'}")
        rec["detail"] = (
            f"tiny {tiny.forward_total:.0f}/{tiny.train_total:.0f}; 73M {r_small:.3f}; 6.8B {r_big:.3f}; "
            f"sweep {' '.join(sweep)}"
        )
        assert (tiny.forward_total, tiny.train_total) == (312, 936)
        assert r_small == pytest.approx(1.03, abs=0.05)
        assert r_big == pytest.approx(0.99, abs=0.05)
        assert len(sweep) == 6


@pytest.mark.slow
def test_criterion_4_parametric_round_trip(noiseless_points, noisy_points, noiseless_reduced_fit, noisy_reduced_fit):
    with criterion(4, "parametric round trip, full and reduced grids") as rec:
        full = multistart_fit(noiseless_points, grid=default_grid())
        full_noisy = multistart_fit(noisy_points, grid=default_grid())
        truth = TRUTH.as_dict()
        worst = max(rel(v, truth[k]) for k, v in full.params.as_dict().items())
        d_alpha = abs(full_noisy.params.alpha - TRUTH.alpha)
        d_beta = abs(full_noisy.params.beta - TRUTH.beta)
        same = [
            max(rel(v, f.params.as_dict()[k]) for k, v in r.params.as_dict().items())
            for r, f in ((noiseless_reduced_fit, full), (noisy_reduced_fit, full_noisy))
        ]
        rec["detail"] = (
            f"noiseless max rel err {worst:.1e}; noisy |dalpha|={d_alpha:.4f} |dbeta|={d_beta:.4f}; "
            f"reduced-vs-full winner rel diff {same[0]:.1e}/{same[1]:.1e}; "
            f"winner init on boundary: {full.init_on_boundary}"
        )
        assert worst <= 1e-3
        assert d_alpha <= 0.02 and d_beta <= 0.02
        for r, f in ((noiseless_reduced_fit, full), (noisy_reduced_fit, full_noisy)):
            for k, v in f.params.as_dict().items():
                assert r.params.as_dict()[k] == pytest.approx(v, rel=1e-6)


@pytest.mark.slow
def test_criterion_5_approach_agreement(isoflop_suite, envelope_suite):
    with criterion(5, "three approaches agree on the noiseless suite") as rec:
        a1 = approaches.approach1(envelope_suite).a
        a2 = approaches.approach2(isoflop_suite).a
        a3 = approaches.approach3(isoflop_suite, grid=default_grid()).a
        values = (a1, a2, a3)
        spread = max(values) - min(values)
        rec["detail"] = f"truth {TRUE_A:.4f}; a1={a1:.4f} a2={a2:.4f} a3={a3:.4f}; max pairwise gap {spread:.4f}"
        for a in values:
            assert a == pytest.approx(TRUE_A, abs=0.03)
        assert spread <= 0.03


def test_criterion_6_oracle_equivalence():
    with criterion(6, "golden-section argmin matches closed form") as rec:
        cf = approaches.closed_form_frontier(TRUTH)
        budgets = np.geomspace(1e16, 1e26, 50)
        errs = [rel(synth.optimal_size(TRUTH, c), cf.G * (c / 6) ** cf.a) for c in budgets]
        rec["detail"] = f"50 budgets, max rel err {max(errs):.1e}"
        assert max(errs) <= 1e-6


def test_criterion_7_gradient_correctness():
    with criterion(7, "analytic gradient matches central differences") as rec:
        rng = np.random.default_rng(2024)
        obj = ParametricObjective(roundtrip_points(sigma=0.02, n=60, seed=8))
        h = 1e-6
        worst = 0.0
        for _ in range(100):
            x = rng.uniform([0, 0, -1, 0, 0], [25, 25, 1, 2, 2])
            _, g = obj(x)
            fd = np.array([(obj(x + h * e)[0] - obj(x - h * e)[0]) / (2 * h) for e in np.eye(5)])
            scale = max(np.abs(fd).max(), 1e-12)
            worst = max(worst, float(np.abs(g - fd).max() / scale))
        rec["detail"] = f"100 points, max rel err {worst:.1e}"
        assert worst <= 1e-5


@pytest.mark.slow
def test_criterion_8_bootstrap_protocol():
    with criterion(8, "bootstrap determinism, zero variance, coverage") as rec:
        noisy = synth.gen_isoflop_suite(TRUTH, ISOFLOP_BUDGETS, rng_seed=0, log_noise_sigma=0.01)
        same = frontier.bootstrap(noisy, 2, seed=11) == frontier.bootstrap(noisy, 2, seed=11)

        exact = []
        for c in ISOFLOP_BUDGETS:
            v = math.log10(0.1 * c**0.5)
            exact += [(10**x, c / (6 * 10**x), 2.0 + (x - v) ** 2) for x in np.linspace(v - 1, v + 1, 7)]
        zero = frontier.bootstrap(exact, 2, seed=0)["a"]
        flat = abs(zero.p90 - zero.p10) <= 1e-12

        covered = 0
        for rep in range(100):
            data = synth.gen_isoflop_suite(TRUTH, ISOFLOP_BUDGETS, rng_seed=10_000 + rep, log_noise_sigma=0.01)
            iv = frontier.bootstrap(data, 2, seed=rep)["a"]
            covered += iv.p10 <= TRUE_A <= iv.p90
        rec["detail"] = f"deterministic={same}; zero-variance p90-p10={zero.p90 - zero.p10:.1e}; coverage {covered}/100"
        assert same
        assert flat
        assert covered >= 80


def test_criterion_9_curvature_diagnostic():
    with criterion(9, "segmented frontier exposes curvature") as rec:
        c = np.geomspace(1e17, 1e23, 300)

        def env(n):
            return [FrontierPoint(float(x), float(y), float(x / (6 * y)), 2.0) for x, y in zip(c, n)]

        flat = [f.exponent for f in frontier.segmented_frontier_fit(env(0.3 * c**0.5))]
        bent = [f.exponent for f in frontier.segmented_frontier_fit(env(c ** (0.5 - 0.01 * np.log10(c))))]
        rec["detail"] = "power law " + "/".join(f"{e:.6f}" for e in flat) + "; concave " + "/".join(
            f"{e:.4f}" for e in bent
        )
        assert max(flat) - min(flat) <= 1e-6
        assert bent[0] > bent[1] > bent[2]
