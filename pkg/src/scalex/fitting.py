"""Numerical kernels: robust losses, log-log and parabola regression, L-BFGS.

The parametric loss is fitted in log space. With ``A, B, E = exp(a), exp(b),
exp(e)`` the log of the predicted loss is ``LSE(a - alpha log N, b - beta log D, e)``
and each observation contributes ``huber(log L_hat - log L)``. Natural logs
are used inside the objective; log10 is used only for presentation.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from scalex.data_model import ParametricParams, as_points
from scalex.errors import DataError, NumericalError, ValidationError

DEFAULT_DELTA = 1e-3
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1000
LBFGS_MEMORY = 10
TIE_TOL = 1e-12


def huber(residual, delta: float = DEFAULT_DELTA):
    """Huber loss: quadratic within ``delta`` of zero, linear beyond."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    r = np.asarray(residual, dtype=float)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_grad(residual, delta: float = DEFAULT_DELTA):
    """Derivative of :func:`huber`; equals ``delta * sign(r)`` at the kink."""
    r = np.asarray(residual, dtype=float)
    return np.clip(r, -delta, delta)


def lse(values, axis=None):
    """``log(sum(exp(values)))`` with the maximum factored out."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("lse of an empty sequence")
    m = np.max(v, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------- regressions


@dataclass(frozen=True)
class PowerLawFit:
    """``y = 10**log10_coeff * x**exponent`` fitted by OLS in log10 space."""

    exponent: float
    log10_coeff: float
    r_squared: float
    n_points: int

    @property
    def coeff(self) -> float:
        return 10.0**self.log10_coeff

    def __call__(self, x):
        return self.coeff * np.asarray(x, dtype=float) ** self.exponent


def fit_power_law(x, y) -> PowerLawFit:
    """Least-squares line through ``(log10 x, log10 y)``."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DataError(f"x and y differ in length ({x.size} vs {y.size})")
    if x.size < 2:
        raise DataError(f"power-law fit needs at least 2 points, got {x.size}")
    if not (np.all(np.isfinite(x) & (x > 0)) and np.all(np.isfinite(y) & (y > 0))):
        raise DataError("power-law fit requires positive finite x and y")
    lx, ly = np.log10(x), np.log10(y)
    xm, ym = lx.mean(), ly.mean()
    sxx = np.sum((lx - xm) ** 2)
    if sxx <= 0 or np.ptp(lx) == 0:
        raise NumericalError("degenerate design: all x values identical")
    slope = np.sum((lx - xm) * (ly - ym)) / sxx
    intercept = ym - slope * xm
    ss_res = np.sum((ly - (intercept + slope * lx)) ** 2)
    ss_tot = np.sum((ly - ym) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)
    return PowerLawFit(float(slope), float(intercept), float(r2), int(x.size))


@dataclass(frozen=True)
class ParabolaFit:
    """``y = c2 x**2 + c1 x + c0`` with its vertex."""

    coeffs: tuple[float, float, float]
    vertex_x: float
    vertex_y: float


def fit_parabola(x, y) -> ParabolaFit:
    """Least-squares quadratic with an interior minimum.

    Raises :class:`NumericalError` when the fit is not convex ("no interior
    minimum") or its vertex falls outside the sampled x range.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DataError(f"x and y differ in length ({x.size} vs {y.size})")
    if np.unique(x).size < 3:
        raise DataError(f"parabola fit needs at least 3 distinct x, got {np.unique(x).size}")
    # Centre and scale x for conditioning, then map coefficients back.
    xm = x.mean()
    xs = max(np.ptp(x) / 2, 1e-300)
    u = (x - xm) / xs
    q2, q1, q0 = np.polyfit(u, y, 2)
    yscale = max(np.max(np.abs(y - y.mean())), np.finfo(float).tiny)
    if q2 <= 1e-12 * yscale:
        raise NumericalError("no interior minimum: fitted parabola is not convex")
    c2 = q2 / xs**2
    c1 = q1 / xs - 2 * q2 * xm / xs**2
    c0 = q0 - q1 * xm / xs + q2 * xm**2 / xs**2
    vu = -q1 / (2 * q2)
    vx = xm + xs * vu
    vy = q0 - q1 * q1 / (4 * q2)
    if not (x.min() <= vx <= x.max()):
        raise NumericalError(
            f"minimum at boundary (vertex x={vx:.4g} outside [{x.min():.4g}, {x.max():.4g}]): widen model-size sweep"
        )
    return ParabolaFit((float(c2), float(c1), float(c0)), float(vx), float(vy))


# ------------------------------------------------------ parametric objective


class ParametricObjective:
    """Huber objective of the log-space parametric loss over a dataset.

    Calling the object with ``(a, b, e, alpha, beta)`` returns
    ``(value, gradient)``.
    """

    def __init__(self, points, delta: float = DEFAULT_DELTA):
        pts = as_points(points)
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta!r}")
        self.delta = float(delta)
        self.log_n = np.log(pts[:, 0])
        self.log_d = np.log(pts[:, 1])
        self.log_l = np.log(pts[:, 2])

    def __len__(self):
        return self.log_n.size

    def log_prediction(self, x):
        a, b, e, alpha, beta = x
        t1 = a - alpha * self.log_n
        t2 = b - beta * self.log_d
        m = np.maximum(np.maximum(t1, t2), e)
        w1, w2, w3 = np.exp(t1 - m), np.exp(t2 - m), np.exp(e - m)
        s = w1 + w2 + w3
        return m + np.log(s), w1 / s, w2 / s, w3 / s

    def residuals(self, x) -> np.ndarray:
        return self.log_prediction(x)[0] - self.log_l

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pred, p1, p2, p3 = self.log_prediction(x)
        r = pred - self.log_l
        if not np.all(np.isfinite(r)):
            i = int(np.flatnonzero(~np.isfinite(r))[0])
            raise NumericalError(
                f"non-finite residual at datum {i} (N={math.exp(self.log_n[i]):.6g}, "
                f"D={math.exp(self.log_d[i]):.6g}) for parameters {x.tolist()}"
            )
        value = float(np.sum(huber(r, self.delta)))
        h = huber_grad(r, self.delta)
        g1, g2 = h * p1, h * p2
        grad = np.array(
            [
                g1.sum(),
                g2.sum(),
                (h * p3).sum(),
                -(g1 @ self.log_n),
                -(g2 @ self.log_d),
            ]
        )
        return value, grad


def parametric_objective(log_params, points, delta: float = DEFAULT_DELTA):
    """Value and analytic gradient of the robust log-loss objective.

    ``log_params`` is ``(a, b, e, alpha, beta)`` with ``A = exp(a)`` etc.
    """
    return ParametricObjective(points, delta)(log_params)


# ------------------------------------------------------------------ L-BFGS


class OptimizeResult(NamedTuple):
    x: np.ndarray
    value: float
    converged: bool
    n_iter: int
    message: str


def minimize_lbfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    memory: int = LBFGS_MEMORY,
) -> OptimizeResult:
    """Limited-memory BFGS with a backtracking (Armijo) line search.

    Stops when the gradient's infinity norm drops below ``tol``. A failed line
    search ends the run with ``converged=False`` and the best iterate so far.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError(f"objective not finite at the initial point {x.tolist()}")
    if np.max(np.abs(g)) < tol:
        return OptimizeResult(x, f, True, 0, "gradient below tolerance")

    s_hist: deque[np.ndarray] = deque(maxlen=memory)
    y_hist: deque[np.ndarray] = deque(maxlen=memory)
    rho_hist: deque[float] = deque(maxlen=memory)
    c1 = 1e-4

    for it in range(1, max_iter + 1):
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            al = rho * (s @ q)
            alphas.append(al)
            q -= al * y
        if s_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            gamma = 1.0 / max(1.0, float(np.sum(np.abs(g))))
        r = gamma * q
        for (s, y, rho), al in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            be = rho * (y @ r)
            r += (al - be) * s
        d = -r
        gd = float(g @ d)
        if not gd < 0:
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            d = -g / max(1.0, float(np.sum(np.abs(g))))
            gd = float(g @ d)

        t = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + t * d
            f_new, g_new = _safe_eval(fun, x_new)
            if f_new <= f + c1 * t * gd:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if s_hist:
                # stale curvature pairs; retry from steepest descent
                s_hist.clear(), y_hist.clear(), rho_hist.clear()
                continue
            return OptimizeResult(x, f, False, it, "line search failed")

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)) and sy > 0:
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        if np.max(np.abs(g)) < tol:
            return OptimizeResult(x, f, True, it, "gradient below tolerance")
    return OptimizeResult(x, f, False, max_iter, "maximum iterations reached")


def _safe_eval(fun, x):
    try:
        f, g = fun(x)
    except (NumericalError, FloatingPointError, OverflowError):
        return math.inf, None
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        return math.inf, None
    return f, g


# ------------------------------------------------------------- multistart


@dataclass(frozen=True)
class InitGrid:
    """Axes of the initialisation grid in ``(a, b, e, alpha, beta)`` order.

    Starts are enumerated with ``itertools.product`` over the axes in that
    order; the enumeration index breaks ties between equal optima.
    """

    a: tuple[float, ...] = tuple(np.arange(0, 26, 5, dtype=float))
    b: tuple[float, ...] = tuple(np.arange(0, 26, 5, dtype=float))
    e: tuple[float, ...] = tuple(np.linspace(-1, 1, 5))
    alpha: tuple[float, ...] = tuple(np.linspace(0, 2, 5))
    beta: tuple[float, ...] = tuple(np.linspace(0, 2, 5))

    @property
    def axes(self) -> tuple[tuple[float, ...], ...]:
        return (self.a, self.b, self.e, self.alpha, self.beta)

    def __len__(self) -> int:
        return math.prod(len(ax) for ax in self.axes)

    def points(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*self.axes))

    def on_boundary(self, init: Sequence[float]) -> bool:
        return any(len(ax) > 1 and v in (min(ax), max(ax)) for v, ax in zip(init, self.axes))


def default_grid() -> InitGrid:
    """The 6 x 6 x 5 x 5 x 5 = 4500 start grid."""
    return InitGrid()


def reduced_grid() -> InitGrid:
    """Every other value of each default axis: 3**5 = 243 starts."""
    return InitGrid(
        a=(0.0, 10.0, 20.0),
        b=(0.0, 10.0, 20.0),
        e=(-1.0, 0.0, 1.0),
        alpha=(0.0, 1.0, 2.0),
        beta=(0.0, 1.0, 2.0),
    )


@dataclass(frozen=True)
class StartOutcome:
    index: int
    init: tuple[float, ...]
    x: tuple[float, ...]
    value: float
    converged: bool
    n_iter: int
    message: str


@dataclass(frozen=True)
class MultistartResult:
    params: ParametricParams
    log_params: tuple[float, ...]
    value: float
    best: StartOutcome
    init_on_boundary: bool
    n_starts: int
    n_converged: int
    outcomes: tuple[StartOutcome, ...] = field(repr=False, default=())


def _run_start(objective: ParametricObjective, index: int, init, tol: float, max_iter: int) -> StartOutcome:
    try:
        res = minimize_lbfgs(objective, np.array(init, dtype=float), tol=tol, max_iter=max_iter)
    except NumericalError as exc:
        return StartOutcome(index, tuple(init), tuple(init), math.inf, False, 0, str(exc))
    return StartOutcome(
        index, tuple(init), tuple(float(v) for v in res.x), float(res.value), res.converged, res.n_iter, res.message
    )


def _run_chunk(args) -> list[StartOutcome]:
    objective, chunk, tol, max_iter = args
    return [_run_start(objective, i, init, tol, max_iter) for i, init in chunk]


def _check_design(pts: np.ndarray) -> None:
    if pts.shape[0] < 5:
        raise DataError(f"parametric fit needs at least 5 points, got {pts.shape[0]}")
    if np.unique(pts[:, 0]).size < 2 or np.unique(pts[:, 1]).size < 2:
        raise DataError("parametric fit needs at least 2 distinct N and 2 distinct D")


def select_best(outcomes: Sequence[StartOutcome]) -> StartOutcome:
    """Lowest objective value; values within ``TIE_TOL`` go to the lower index."""
    finite = [o for o in outcomes if math.isfinite(o.value)]
    if not finite:
        raise NumericalError("no start produced a finite objective value")
    best_val = min(o.value for o in finite)
    cutoff = best_val + TIE_TOL * max(1.0, abs(best_val))
    return min((o for o in finite if o.value <= cutoff), key=lambda o: o.index)


def multistart_fit(
    points,
    grid: InitGrid | None = None,
    delta: float = DEFAULT_DELTA,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> MultistartResult:
    """Fit ``(E, A, B, alpha, beta)`` by L-BFGS from every grid start.

    The winner is chosen by objective value, ties to the lower grid index, so
    the result does not depend on ``threads``.
    """
    pts = as_points(points)
    _check_design(pts)
    grid = grid or default_grid()
    objective = ParametricObjective(pts, delta)
    starts = list(enumerate(grid.points()))

    if threads > 1 and len(starts) > 1:
        chunks = [starts[k::threads] for k in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(_run_chunk, [(objective, c, tol, max_iter) for c in chunks])
            outcomes = sorted((o for part in parts for o in part), key=lambda o: o.index)
    else:
        outcomes = [_run_start(objective, i, init, tol, max_iter) for i, init in starts]

    n_conv = sum(o.converged for o in outcomes)
    if n_conv == 0:
        worst = "; ".join(f"start {o.index} {o.init}: {o.message}" for o in outcomes[:5])
        raise NumericalError(f"none of {len(outcomes)} starts converged (first: {worst})")
    best = select_best(outcomes)
    a, b, e, alpha, beta = best.x
    try:
        params = ParametricParams(E=math.exp(e), A=math.exp(a), B=math.exp(b), alpha=alpha, beta=beta)
    except (ValidationError, OverflowError) as exc:
        raise NumericalError(f"best fit has invalid constants {best.x}: {exc}") from None
    return MultistartResult(
        params=params,
        log_params=best.x,
        value=best.value,
        best=best,
        init_on_boundary=grid.on_boundary(best.init),
        n_starts=len(outcomes),
        n_converged=n_conv,
        outcomes=tuple(outcomes),
    )
