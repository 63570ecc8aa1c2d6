"""Synthetic training runs drawn from a known parametric loss.

These are the ground truth every fitting pipeline is checked against. The
compute-optimal model size is found here by a 1-D golden-section search on
``L(N, C / 6N)``, independently of the closed-form frontier.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from scalex.data_model import FinalPoint, ParametricParams, RunRecord

REFERENCE_PARAMS = ParametricParams(E=1.69, A=406.4, B=410.7, alpha=0.34, beta=0.28)

GOLDEN_TOL = 1e-10
DEFAULT_SPAN_DECADES = 2.0
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_loss(params: ParametricParams, n, d, log_noise_sigma: float = 0.0, rng_seed=None):
    """Parametric loss times ``exp(eps)`` with ``eps ~ Normal(0, sigma**2)``."""
    if log_noise_sigma < 0:
        raise ValueError(f"log_noise_sigma must be >= 0, got {log_noise_sigma}")
    loss = params.predict(n, d)
    if log_noise_sigma == 0:
        return loss
    eps = _rng(rng_seed).normal(0.0, log_noise_sigma, size=np.shape(loss))
    out = loss * np.exp(eps)
    return float(out) if np.ndim(out) == 0 else out


def golden_section(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    """Minimiser of a unimodal ``f`` on ``[lo, hi]`` to within ``tol``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_size(params: ParametricParams, flops: float, tol: float = GOLDEN_TOL) -> float:
    """Loss-minimising model size under ``C = 6 N D`` by golden-section search.

    Searches ``log N`` over three decades either side of the closed-form
    optimum. The constant ``E`` is dropped from the objective so the flat
    bottom is resolved with less cancellation.
    """
    p = params
    s = p.alpha + p.beta
    centre = math.log(((p.alpha * p.A) / (p.beta * p.B)) ** (1 / s)) + (p.beta / s) * math.log(flops / 6.0)
    span = 3 * math.log(10.0)

    def reducible(log_n):
        n = math.exp(log_n)
        return p.A * math.exp(-p.alpha * log_n) + p.B * (6.0 * n / flops) ** p.beta

    return math.exp(golden_section(reducible, centre - span, centre + span, tol))


def gen_run(
    params: ParametricParams,
    n: int,
    d_max: float,
    n_points: int = 50,
    cycle_mismatch_penalty: float = 0.0,
    rng_seed=None,
    log_noise_sigma: float = 0.0,
    d_min_fraction: float = 0.01,
    run_id: str | None = None,
) -> RunRecord:
    """One run with log-spaced checkpoints from ``d_min_fraction * d_max`` to ``d_max``.

    Intermediate checkpoints of a schedule tuned for ``d_max`` overestimate
    the loss of a run whose schedule ends there; this is modelled by the
    factor ``1 + penalty * (1 - d / d_max)``.
    """
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    tokens = np.geomspace(d_min_fraction * d_max, d_max, n_points)
    tokens[-1] = d_max
    loss = np.asarray(gen_loss(params, n, tokens, log_noise_sigma, rng_seed))
    loss = loss * (1.0 + cycle_mismatch_penalty * (1.0 - tokens / d_max))
    rid = run_id or f"N{int(n)}_D{d_max:.4g}"
    return RunRecord(rid, int(n), int(round(d_max)), tuple(zip(tokens.tolist(), loss.tolist())))


def gen_isoflop_suite(
    params: ParametricParams,
    budgets: Sequence[float],
    sizes_per_budget: int = 7,
    rng_seed=None,
    log_noise_sigma: float = 0.0,
    span_decades: float = DEFAULT_SPAN_DECADES,
) -> list[FinalPoint]:
    """Final points of isoFLOP sweeps centred on each budget's optimum.

    Sizes are log-spaced over ``span_decades`` around the golden-section
    optimum; tokens follow from ``D = C / 6N``.
    """
    if sizes_per_budget < 3:
        raise ValueError(f"sizes_per_budget must be >= 3, got {sizes_per_budget}")
    rng = _rng(rng_seed)
    out = []
    offsets = np.linspace(-span_decades / 2, span_decades / 2, sizes_per_budget)
    for c in budgets:
        if not c > 0:
            raise ValueError(f"budgets must be positive, got {c}")
        n_star = optimal_size(params, c)
        for n in n_star * 10.0**offsets:
            d = c / (6.0 * n)
            out.append(FinalPoint(float(n), float(d), float(gen_loss(params, n, d, log_noise_sigma, rng))))
    return out


def gen_envelope_suite(
    params: ParametricParams,
    sizes: Sequence[float],
    horizon_factors: Sequence[float] = (0.25, 0.25 * 16 ** (1 / 3), 0.25 * 16 ** (2 / 3), 4.0),
    n_points: int = 100,
    cycle_mismatch_penalty: float = 0.01,
    rng_seed=None,
    log_noise_sigma: float = 0.0,
    d_min_fraction: float = 0.01,
) -> list[RunRecord]:
    """Runs for several model sizes, each at several schedule horizons.

    Horizons are multiples of the compute-optimal token count for each size
    (the default four span a factor of 16).
    """
    rng = _rng(rng_seed)
    runs = []
    for n in sizes:
        n = int(round(n))
        d_opt = optimal_tokens(params, n)
        for k, f in enumerate(horizon_factors):
            runs.append(
                gen_run(
                    params,
                    n,
                    d_opt * f,
                    n_points=n_points,
                    cycle_mismatch_penalty=cycle_mismatch_penalty,
                    rng_seed=rng,
                    log_noise_sigma=log_noise_sigma,
                    d_min_fraction=d_min_fraction,
                    run_id=f"N{n}_h{k}",
                )
            )
    return runs


def optimal_tokens(params: ParametricParams, n: float) -> float:
    """Token count for which ``n`` is the compute-optimal size.

    Setting the derivative of ``L`` along ``D = C / 6N`` to zero gives
    ``alpha A N**-alpha = beta B D**-beta``.
    """
    p = params
    return (p.beta * p.B / (p.alpha * p.A) * n**p.alpha) ** (1.0 / p.beta)
