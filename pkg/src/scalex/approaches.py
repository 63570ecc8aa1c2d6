"""The three frontier estimators: envelope, isoFLOP profiles, parametric fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from scalex.curves import (
    DEFAULT_N_GRID,
    DEFAULT_WINDOW,
    extract_envelope,
    late_winner_fraction,
    smooth_run,
    split_segments,
)
from scalex.data_model import (
    Approach,
    Diagnostics,
    FrontierPoint,
    ModelShape,
    ParametricParams,
    RunRecord,
    ScalingFit,
    as_points,
)
from scalex.errors import DataError, NumericalError
from scalex.fitting import (
    DEFAULT_DELTA,
    InitGrid,
    PowerLawFit,
    fit_parabola,
    fit_power_law,
    huber,
    multistart_fit,
)

BUDGET_RTOL = 0.01


def _power_law_diagnostics(fit: PowerLawFit, c: np.ndarray, n: np.ndarray, **extra) -> Diagnostics:
    resid = np.abs(np.log(n) - np.log(fit(c)))
    return Diagnostics(
        count=int(c.size),
        mean_abs_log_residual=float(resid.mean()),
        max_abs_log_residual=float(resid.max()),
        flops_min=float(c.min()),
        flops_max=float(c.max()),
        **extra,
    )


def _segment(points: list[FrontierPoint], segment: tuple[int, int] | None) -> list[FrontierPoint]:
    if segment is None:
        return points
    k, m = segment
    if not 1 <= k <= m:
        raise DataError(f"segment {k}/{m} out of range")
    return split_segments(points, m)[k - 1]


def approach1(
    runs: Sequence[RunRecord],
    n_grid: int = DEFAULT_N_GRID,
    smooth_window: int = DEFAULT_WINDOW,
    shapes: Mapping[str, ModelShape] | None = None,
    segment: tuple[int, int] | None = None,
    drop_boundary_sizes: bool = True,
) -> ScalingFit:
    """Envelope approach: minimum loss over training curves at each FLOPs value.

    Runs are smoothed, interpolated in log FLOPs, and the winning
    ``(C, N, D)`` points are regressed as power laws in ``C``.

    Envelope points won by the smallest or largest model size are censored
    (the optimum may lie outside the sweep) and dropped unless
    ``drop_boundary_sizes`` is false. ``segment`` ``(k, m)`` restricts the
    regression to the k-th of m FLOPs-ordered slices of what remains.
    """
    sizes = sorted({r.n_params for r in runs})
    if len(sizes) < 2:
        raise DataError("envelope approach needs runs for at least 2 model sizes")
    smoothed = [smooth_run(r, smooth_window) for r in runs]
    env = extract_envelope(smoothed, n_grid=n_grid, shapes=shapes)
    if drop_boundary_sizes:
        if len(sizes) < 3:
            raise DataError("dropping boundary sizes needs runs for at least 3 model sizes")
        env = [p for p in env if p.n_params not in (sizes[0], sizes[-1])]
        if len(env) < 2:
            raise DataError("envelope has fewer than 2 points won by interior model sizes")
    env = _segment(env, segment)
    c = np.array([p.flops for p in env])
    n = np.array([p.n_params for p in env])
    d = np.array([p.tokens for p in env])
    n_fit = fit_power_law(c, n)
    d_fit = fit_power_law(c, d)
    diag = _power_law_diagnostics(n_fit, c, n, late_winner_fraction=late_winner_fraction(env, smoothed))
    return ScalingFit(Approach.ENVELOPE, n_fit.exponent, d_fit.exponent, n_fit.coeff, d_fit.coeff, diag)


def group_budgets(points, rtol: float = BUDGET_RTOL) -> list[np.ndarray]:
    """Cluster final points into isoFLOP budgets by ``C = 6 N D``.

    Points sorted by ``C`` join the current budget while their ``C`` is within
    ``rtol`` of the budget's smallest ``C``.
    """
    pts = as_points(points)
    c = 6.0 * pts[:, 0] * pts[:, 1]
    order = np.argsort(c, kind="stable")
    groups: list[list[int]] = []
    start = None
    for i in order:
        if start is None or c[i] > start * (1 + rtol):
            groups.append([])
            start = c[i]
        groups[-1].append(i)
    return [pts[g] for g in groups]


@dataclass(frozen=True)
class IsoflopMinimum:
    flops: float
    n_opt: float
    d_opt: float
    loss_min: float


def isoflop_minima(points, rtol: float = BUDGET_RTOL) -> list[IsoflopMinimum]:
    """Parabola vertex of loss against ``log10 N`` for each budget."""
    budgets = group_budgets(points, rtol)
    if len(budgets) < 2:
        raise DataError(f"isoFLOP approach needs at least 2 budgets, got {len(budgets)}")
    out = []
    for pts in budgets:
        c = float(np.mean(6.0 * pts[:, 0] * pts[:, 1]))
        if np.unique(pts[:, 0]).size < 3:
            raise DataError(f"budget C={c:.4g} has fewer than 3 model sizes")
        try:
            par = fit_parabola(np.log10(pts[:, 0]), pts[:, 2])
        except NumericalError as exc:
            raise NumericalError(f"budget C={c:.4g}: {exc}") from None
        n_opt = 10.0**par.vertex_x
        out.append(IsoflopMinimum(c, n_opt, c / (6.0 * n_opt), par.vertex_y))
    return out


def approach2(points, rtol: float = BUDGET_RTOL) -> ScalingFit:
    """IsoFLOP approach: per-budget parabola minima regressed against ``C``.

    ``D_opt`` comes from inverting ``C = 6 N D`` at the fitted ``N_opt``.
    """
    minima = isoflop_minima(points, rtol)
    c = np.array([m.flops for m in minima])
    n = np.array([m.n_opt for m in minima])
    d = np.array([m.d_opt for m in minima])
    n_fit = fit_power_law(c, n)
    d_fit = fit_power_law(c, d)
    return ScalingFit(
        Approach.ISOFLOP, n_fit.exponent, d_fit.exponent, n_fit.coeff, d_fit.coeff, _power_law_diagnostics(n_fit, c, n)
    )


@dataclass(frozen=True)
class ClosedFormFrontier:
    """``N_opt = G (C/6)**a`` and ``D_opt = (C/6)**b / G``."""

    G: float
    a: float
    b: float

    @property
    def n_coeff(self) -> float:
        return self.G * 6.0 ** (-self.a)

    @property
    def d_coeff(self) -> float:
        return 6.0 ** (-self.b) / self.G


def closed_form_frontier(params: ParametricParams) -> ClosedFormFrontier:
    s = params.alpha + params.beta
    if not s > 0 or params.A <= 0 or params.B <= 0:
        raise NumericalError(f"frontier undefined for {params}")
    G = (params.alpha * params.A / (params.beta * params.B)) ** (1.0 / s)
    a = params.beta / s
    # alpha / s written as 1 - a so that a + b == 1 holds in floating point
    return ClosedFormFrontier(G=G, a=a, b=1.0 - a)


def evaluate_fit(params: ParametricParams, heldout, delta: float = DEFAULT_DELTA) -> Diagnostics:
    """Log-residual summary and total Huber loss of ``params`` on ``heldout``."""
    if len(heldout) == 0:
        raise DataError("held-out set is empty")
    pts = as_points(heldout)
    r = np.log(params.predict(pts[:, 0], pts[:, 1])) - np.log(pts[:, 2])
    a = np.abs(r)
    c = 6.0 * pts[:, 0] * pts[:, 1]
    return Diagnostics(
        count=int(a.size),
        mean_abs_log_residual=float(a.mean()),
        max_abs_log_residual=float(a.max()),
        huber_total=float(np.sum(huber(r, delta))),
        flops_min=float(c.min()),
        flops_max=float(c.max()),
    )


def frontier_fit(params: ParametricParams, diagnostics: Diagnostics) -> ScalingFit:
    cf = closed_form_frontier(params)
    return ScalingFit(Approach.PARAMETRIC, cf.a, cf.b, cf.n_coeff, cf.d_coeff, diagnostics, params=params)


def approach3(
    points,
    grid: InitGrid | None = None,
    delta: float = DEFAULT_DELTA,
    threads: int = 1,
) -> ScalingFit:
    """Parametric approach: robust multistart fit, then the closed-form frontier."""
    res = multistart_fit(points, grid=grid, delta=delta, threads=threads)
    diag = evaluate_fit(res.params, points, delta)
    diag = Diagnostics(**{**vars(diag), "init_on_boundary": res.init_on_boundary})
    return frontier_fit(res.params, diag)


def fit_approach(approach, data, **kwargs) -> ScalingFit:
    """Dispatch to the approach named by ``approach`` (1/2/3 or its name)."""
    approach = Approach.parse(approach)
    if approach is Approach.ENVELOPE:
        return approach1(data, **kwargs)
    if approach is Approach.ISOFLOP:
        return approach2(data, **kwargs)
    return approach3(data, **kwargs)
