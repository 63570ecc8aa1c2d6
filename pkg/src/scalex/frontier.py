"""Predictions from a fitted frontier: allocations, budget tables, curvature, bootstrap."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scalex.approaches import fit_approach
from scalex.curves import split_segments
from scalex.data_model import Approach, BootstrapSummary, FrontierPoint, ScalingFit, as_points
from scalex.errors import DataError, NumericalError, ScalexError
from scalex.fitting import PowerLawFit, fit_power_law

REFERENCE_BUDGET = 5.76e23
MAX_FAILED_FRACTION = 0.2


@dataclass(frozen=True)
class Prediction:
    flops: float
    n_opt: float
    d_opt: float
    loss_hat: float | None
    extrapolated: bool


def _extrapolated(fit: ScalingFit, flops: float) -> bool:
    lo, hi = fit.diagnostics.flops_min, fit.diagnostics.flops_max
    if lo is None or hi is None:
        return False
    return not lo <= flops <= hi


def predict_opt(fit: ScalingFit, flops: float) -> Prediction:
    """Optimal size and tokens at ``flops``; flags budgets outside the fitted range."""
    if not flops > 0:
        raise DataError(f"flops must be positive, got {flops!r}")
    n = fit.n_coeff * flops**fit.a
    d = fit.d_coeff * flops**fit.b
    loss = fit.params.predict(n, d) if fit.params is not None else None
    return Prediction(float(flops), float(n), float(d), loss, _extrapolated(fit, flops))


def flops_for_size(fit: ScalingFit, n_params: float) -> float:
    """Inverse of ``N_opt(C)``: the budget at which ``n_params`` is optimal."""
    if not fit.a > 0:
        raise NumericalError(f"cannot invert frontier with exponent a={fit.a}")
    return (n_params / fit.n_coeff) ** (1.0 / fit.a)


@dataclass(frozen=True)
class BudgetRow:
    """One row of a budget table.

    ``tokens`` is ``C / 6N`` so the row satisfies ``C = 6 N D``;
    ``tokens_independent`` evaluates the fitted ``D_opt(C)`` power law, which
    need not agree when the two exponents were fitted separately.
    """

    n_params: float
    flops: float
    reference_units: float
    tokens: float
    tokens_independent: float
    extrapolated: bool


def budget_table(fit: ScalingFit, param_sizes: Sequence[float]) -> list[BudgetRow]:
    rows = []
    for n in param_sizes:
        c = flops_for_size(fit, n)
        rows.append(
            BudgetRow(
                n_params=float(n),
                flops=c,
                reference_units=c / REFERENCE_BUDGET,
                tokens=c / (6.0 * n),
                tokens_independent=fit.d_coeff * c**fit.b,
                extrapolated=_extrapolated(fit, c),
            )
        )
    return rows


def segmented_frontier_fit(envelope: Sequence[FrontierPoint], n_segments: int = 3) -> list[PowerLawFit]:
    """``N``-vs-``C`` power laws on consecutive FLOPs slices of the envelope.

    A drift in the exponents across slices reveals curvature of the frontier.
    """
    return [
        fit_power_law([p.flops for p in seg], [p.n_params for p in seg])
        for seg in split_segments(envelope, n_segments)
    ]


# ---------------------------------------------------------------- bootstrap


def percentile(values, q):
    """Percentiles by linear interpolation between order statistics (Hazen)."""
    return np.percentile(np.asarray(values, dtype=float), q, method="hazen")


def _resample_fit(data, approach: Approach, idx: np.ndarray, fit_kwargs: dict):
    subset = [data[i] for i in idx] if approach is Approach.ENVELOPE else data[idx]
    try:
        fit = fit_approach(approach, subset, **fit_kwargs)
    except ScalexError:
        return None
    return fit.a, fit.b


def bootstrap(
    data,
    approach,
    n_resamples: int = 100,
    fraction: float = 0.8,
    seed: int = 0,
    threads: int = 1,
    **fit_kwargs,
) -> dict[str, BootstrapSummary]:
    """10th/90th percentile intervals for the exponents ``a`` and ``b``.

    Each resample draws ``ceil(fraction * n)`` records without replacement:
    whole runs for the envelope approach, final points otherwise. Resample
    ``i`` uses its own generator spawned from ``seed``, so results do not
    depend on ``threads``. Resamples whose fit fails are counted; more than
    20% failures is an error.
    """
    approach = Approach.parse(approach)
    if not 0 < fraction <= 1:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    if approach is not Approach.ENVELOPE:
        data = as_points(data)
    n = len(data)
    k = math.ceil(fraction * n)
    full = fit_approach(approach, data, **fit_kwargs)

    streams = np.random.SeedSequence(seed).spawn(n_resamples)
    draws = [np.sort(np.random.default_rng(s).choice(n, size=k, replace=False)) for s in streams]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda idx: _resample_fit(data, approach, idx, fit_kwargs), draws))
    else:
        results = [_resample_fit(data, approach, idx, fit_kwargs) for idx in draws]

    ok = [r for r in results if r is not None]
    n_failed = n_resamples - len(ok)
    if n_failed > MAX_FAILED_FRACTION * n_resamples:
        raise NumericalError(f"{n_failed} of {n_resamples} bootstrap resamples failed to fit")
    out = {}
    for j, name in enumerate(("a", "b")):
        vals = [r[j] for r in ok]
        p10, p90 = percentile(vals, [10, 90])
        out[name] = BootstrapSummary(
            point=float(getattr(full, name)),
            p10=float(p10),
            p90=float(p90),
            n_resamples=n_resamples,
            resample_fraction=float(fraction),
            seed=int(seed),
            n_failed=n_failed,
        )
    return out
