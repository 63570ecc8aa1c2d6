"""Loss-curve preprocessing: smoothing, interpolation, envelope extraction.

FLOPs are linear in tokens for a fixed model, so every run carries a cost
per token: ``6 N`` under the approximation, or the exact per-token training
cost of its :class:`ModelShape`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from scalex.data_model import FrontierPoint, ModelShape, RunRecord, fmt
from scalex.errors import DataError, OutOfDomainError, ValidationError
from scalex.flops import flops_per_token

DEFAULT_WINDOW = 10
DEFAULT_SIGMA_RATIO = 0.25
DEFAULT_N_GRID = 1500
LATE_FRACTION = 0.15


def gaussian_smooth(y, window: int = DEFAULT_WINDOW, sigma_ratio: float = DEFAULT_SIGMA_RATIO) -> np.ndarray:
    """Gaussian-weighted moving average in observation order.

    The kernel spans ``window // 2`` neighbours on each side (so an even
    window is widened by one to stay symmetric) with ``sigma = window *
    sigma_ratio``. Near the ends the truncated kernel is renormalised.
    A window longer than the series is clamped to its length.
    """
    y = np.asarray(y, dtype=float)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = y.size
    window = min(window, n)
    half = window // 2
    if half == 0 or n < 2:
        return y.copy()
    sigma = window * sigma_ratio
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) / sigma) ** 2)
    num = np.convolve(np.pad(y, half), kernel, mode="valid")
    den = np.convolve(np.pad(np.ones(n), half), kernel, mode="valid")
    return num / den


def smooth_run(run: RunRecord, window: int = DEFAULT_WINDOW, sigma_ratio: float = DEFAULT_SIGMA_RATIO) -> RunRecord:
    if window <= 1:
        return run
    losses = gaussian_smooth(run.losses, window, sigma_ratio)
    return RunRecord(run.run_id, run.n_params, run.cosine_cycle_tokens, tuple(zip(run.tokens, losses)))


def _cost_per_token(run: RunRecord, shapes: Mapping[str, ModelShape] | None) -> tuple[float, str]:
    if shapes is None:
        return 6.0 * run.n_params, "6nd"
    try:
        shape = shapes[run.run_id]
    except KeyError:
        raise ValidationError("no ModelShape supplied for exact FLOPs", f"run {run.run_id!r}") from None
    return flops_per_token(shape), "exact"


@dataclass(frozen=True)
class RunInterpolant:
    """Piecewise-linear loss as a function of ``log10 FLOPs`` for one run."""

    run: RunRecord
    cost_per_token: float
    convention: str
    log_flops: np.ndarray
    losses: np.ndarray

    @property
    def domain(self) -> tuple[float, float]:
        return 10.0 ** self.log_flops[0], 10.0 ** self.log_flops[-1]

    def __call__(self, flops):
        c = np.asarray(flops, dtype=float)
        lc = np.log10(c)
        lo, hi = self.log_flops[0], self.log_flops[-1]
        if np.any((lc < lo) | (lc > hi)):
            raise OutOfDomainError(
                f"run {self.run.run_id!r}: FLOPs outside interpolation domain [{10**lo:.6g}, {10**hi:.6g}]"
            )
        out = np.interp(lc, self.log_flops, self.losses)
        return float(out) if out.ndim == 0 else out

    def evaluate_grid(self, log_grid: np.ndarray) -> np.ndarray:
        """Loss at each grid point, NaN where the run does not reach."""
        out = np.interp(log_grid, self.log_flops, self.losses)
        out[(log_grid < self.log_flops[0]) | (log_grid > self.log_flops[-1])] = np.nan
        return out


def interpolate_run(run: RunRecord, shape: ModelShape | None = None) -> RunInterpolant:
    """Interpolant of ``run`` over FLOPs; exact FLOPs if ``shape`` is given, else 6ND."""
    if shape is None:
        return _interpolant(run, 6.0 * run.n_params, "6nd")
    return _interpolant(run, flops_per_token(shape), "exact")


def _interpolant(run: RunRecord, cost: float, convention: str) -> RunInterpolant:
    # tokens are strictly increasing, so log FLOPs are too
    return RunInterpolant(run, cost, convention, np.log10(cost * run.tokens), run.losses)


def extract_envelope(
    runs: Sequence[RunRecord],
    n_grid: int = DEFAULT_N_GRID,
    shapes: Mapping[str, ModelShape] | None = None,
    grid=None,
) -> list[FrontierPoint]:
    """Minimal loss over runs at log-spaced FLOPs values.

    The grid spans the union of the runs' FLOPs domains unless ``grid`` is
    given explicitly. Grid points that no run reaches are skipped. Ties go to
    the smaller model. ``shapes`` maps run ids to shapes for exact FLOPs;
    without it FLOPs are ``6 N D``.
    """
    if not runs:
        raise DataError("no runs given")
    interps = [_interpolant(run, *_cost_per_token(run, shapes)) for run in runs]
    # stable order by model size so argmin ties resolve to the smaller N
    order = sorted(range(len(interps)), key=lambda i: (interps[i].run.n_params, i))
    interps = [interps[i] for i in order]

    if grid is None:
        lo = min(it.log_flops[0] for it in interps)
        hi = max(it.log_flops[-1] for it in interps)
        log_grid = np.linspace(lo, hi, n_grid)
    else:
        log_grid = np.log10(np.asarray(grid, dtype=float))

    table = np.vstack([it.evaluate_grid(log_grid) for it in interps])
    covered = ~np.all(np.isnan(table), axis=0)
    if not covered.any():
        raise DataError("envelope is empty: no run covers any grid point")
    filled = np.where(np.isnan(table), np.inf, table)
    winners = np.argmin(filled, axis=0)

    points = []
    for j in np.flatnonzero(covered):
        it = interps[winners[j]]
        c = 10.0 ** log_grid[j]
        points.append(
            FrontierPoint(
                flops=c,
                n_params=float(it.run.n_params),
                tokens=c / it.cost_per_token,
                loss=float(filled[winners[j], j]),
                convention=it.convention,
                run_id=it.run.run_id,
            )
        )
    return points


def split_segments(envelope: Sequence[FrontierPoint], n_segments: int) -> list[list[FrontierPoint]]:
    """Contiguous FLOPs-ordered slices of equal size; the remainder goes to the later slices."""
    pts = sorted(envelope, key=lambda p: p.flops)
    if n_segments < 1:
        raise ValueError(f"n_segments must be >= 1, got {n_segments}")
    if len(pts) < 2 * n_segments:
        raise DataError(f"need at least {2 * n_segments} envelope points for {n_segments} segments, got {len(pts)}")
    base, extra = divmod(len(pts), n_segments)
    sizes = [base + (1 if k >= n_segments - extra else 0) for k in range(n_segments)]
    bounds = np.cumsum([0] + sizes)
    return [pts[bounds[k] : bounds[k + 1]] for k in range(n_segments)]


def late_winner_fraction(envelope: Sequence[FrontierPoint], runs: Sequence[RunRecord], late: float = LATE_FRACTION) -> float:
    """Share of envelope points taken from the final ``late`` fraction of their run."""
    last = {r.run_id: r.tokens[-1] for r in runs}
    if not envelope:
        return math.nan
    hits = sum(p.tokens >= (1.0 - late) * last[p.run_id] for p in envelope)
    return hits / len(envelope)


def cosine_lr(step: float, total_steps: float, max_lr: float, decay_factor: float = 10.0) -> float:
    """Cosine schedule decaying from ``max_lr`` to ``max_lr / decay_factor``."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside schedule [0, {total_steps}]")
    if decay_factor < 1:
        raise ValueError(f"decay_factor must be >= 1, got {decay_factor}")
    min_lr = max_lr / decay_factor
    return min_lr + 0.5 * (max_lr - min_lr) * (1.0 + math.cos(math.pi * step / total_steps))


def write_plotdata(path, runs: Sequence[RunRecord], envelope: Sequence[FrontierPoint] | None = None,
                   shapes: Mapping[str, ModelShape] | None = None) -> None:
    """Per-run curves and the envelope as ``flops,loss,run_id`` CSV.

    Envelope rows use the run id ``envelope``.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flops", "loss", "run_id"])
        for run in runs:
            cost, _ = _cost_per_token(run, shapes)
            for t, l in run.points:
                w.writerow([fmt(cost * t), fmt(l), run.run_id])
        for p in envelope or ():
            w.writerow([fmt(p.flops), fmt(p.loss), "envelope"])
