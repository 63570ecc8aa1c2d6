"""Domain types and file ingestion/serialization.

All numeric text is written with 17 significant digits so every float64
survives a save/load round trip bit for bit.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from scalex.errors import DataError, ValidationError

FLOAT_FMT = ".17g"

RUNS_HEADER = ("run_id", "n_params", "cosine_cycle_tokens", "tokens", "loss")
FINAL_POINTS_HEADER = ("n_params", "tokens", "loss")


def fmt(x: float) -> str:
    return format(float(x), FLOAT_FMT)


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool):
        raise ValidationError(f"{name} must be an integer, got {value!r}", name)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value) or value != int(value):
            raise ValidationError(f"{name} must be an integer, got {value!r}", name)
    try:
        ivalue = int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be an integer, got {value!r}", name) from None
    if ivalue <= 0:
        raise ValidationError(f"{name} must be strictly positive, got {value!r}", name)
    return ivalue


def _positive_real(value, name: str) -> float:
    try:
        fvalue = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a real number, got {value!r}", name) from None
    if not math.isfinite(fvalue) or fvalue <= 0:
        raise ValidationError(f"{name} must be positive and finite, got {value!r}", name)
    return fvalue


@dataclass(frozen=True)
class ModelShape:
    """Transformer hyperparameters used for FLOPs and parameter accounting.

    ``key_size`` is the per-head key/value width. ``ffw_size`` is free; nothing
    ties it to ``d_model``.
    """

    n_layers: int
    d_model: int
    ffw_size: int
    key_size: int
    n_heads: int
    vocab_size: int = 32000
    seq_len: int = 2048

    def __post_init__(self):
        for name in ("n_layers", "d_model", "ffw_size", "key_size", "n_heads", "vocab_size", "seq_len"):
            object.__setattr__(self, name, _positive_int(getattr(self, name), name))

    @property
    def attn_width(self) -> int:
        """Total query/key/value width, ``key_size * n_heads``."""
        return self.key_size * self.n_heads


@dataclass(frozen=True)
class RunRecord:
    """One training run: model size, schedule horizon and its loss curve.

    ``points`` holds ``(tokens, loss)`` pairs with tokens strictly increasing.
    """

    run_id: str
    n_params: int
    cosine_cycle_tokens: int
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        rid = str(self.run_id)
        object.__setattr__(self, "run_id", rid)
        where = f"run {rid!r}"
        try:
            object.__setattr__(self, "n_params", _positive_int(self.n_params, "n_params"))
            object.__setattr__(
                self, "cosine_cycle_tokens", _positive_int(self.cosine_cycle_tokens, "cosine_cycle_tokens")
            )
        except ValidationError as exc:
            raise ValidationError(str(exc), where) from None
        pts = tuple((float(t), float(l)) for t, l in self.points)
        if len(pts) < 2:
            raise ValidationError(f"needs at least 2 points, got {len(pts)}", where)
        prev = -math.inf
        for i, (t, l) in enumerate(pts):
            if not math.isfinite(t) or t <= 0:
                raise ValidationError(f"point {i}: tokens must be positive and finite, got {t!r}", where)
            if t <= prev:
                raise ValidationError(f"point {i}: tokens must be strictly increasing ({t!r} after {prev!r})", where)
            if not math.isfinite(l) or l <= 0:
                raise ValidationError(f"point {i}: loss must be positive and finite, got {l!r}", where)
            prev = t
        object.__setattr__(self, "points", pts)

    @property
    def tokens(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def losses(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


class FinalPoint(NamedTuple):
    """Final observation of one trained model: ``(N, D, L)``."""

    n_params: float
    tokens: float
    loss: float


@dataclass(frozen=True)
class FrontierPoint:
    """A point on the loss-minimal envelope.

    ``convention`` records how ``flops`` relates to ``(n_params, tokens)``:
    ``"6nd"`` or ``"exact"``.
    """

    flops: float
    n_params: float
    tokens: float
    loss: float
    convention: str = "6nd"
    run_id: str | None = None


@dataclass(frozen=True)
class ParametricParams:
    """Constants of ``L(N, D) = E + A / N**alpha + B / D**beta``.

    Loss units are opaque; the constants are only meaningful for the loss
    scale they were fitted on.
    """

    E: float
    A: float
    B: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("E", "A", "B", "alpha", "beta"):
            object.__setattr__(self, name, _positive_real(getattr(self, name), name))

    def predict(self, n, d):
        """Predicted loss; broadcasts over array inputs."""
        n = np.asarray(n, dtype=float)
        d = np.asarray(d, dtype=float)
        out = self.E + self.A / n**self.alpha + self.B / d**self.beta
        return float(out) if out.ndim == 0 else out

    def as_dict(self) -> dict[str, float]:
        return {"E": self.E, "A": self.A, "B": self.B, "alpha": self.alpha, "beta": self.beta}


class Approach(str, enum.Enum):
    ENVELOPE = "envelope"
    ISOFLOP = "isoflop"
    PARAMETRIC = "parametric"

    @classmethod
    def parse(cls, value) -> "Approach":
        if isinstance(value, cls):
            return value
        aliases = {"1": cls.ENVELOPE, "2": cls.ISOFLOP, "3": cls.PARAMETRIC}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown approach {value!r}; expected 1, 2, 3 or one of {[a.value for a in cls]}") from None


@dataclass(frozen=True)
class Diagnostics:
    """Residual summary of a fit plus approach-specific extras.

    Residuals are natural-log residuals: of ``N_opt`` for the envelope and
    isoFLOP approaches, of the loss for the parametric approach.
    """

    count: int
    mean_abs_log_residual: float
    max_abs_log_residual: float
    huber_total: float | None = None
    flops_min: float | None = None
    flops_max: float | None = None
    late_winner_fraction: float | None = None
    init_on_boundary: bool | None = None


@dataclass(frozen=True)
class BootstrapSummary:
    point: float
    p10: float
    p90: float
    n_resamples: int
    resample_fraction: float
    seed: int
    n_failed: int = 0

    def __post_init__(self):
        if not self.p10 <= self.p90:
            raise ValidationError(f"p10 ({self.p10}) exceeds p90 ({self.p90})", "BootstrapSummary")
        if not 0 < self.resample_fraction <= 1:
            raise ValidationError(f"resample_fraction must lie in (0, 1], got {self.resample_fraction}")


@dataclass(frozen=True)
class ScalingFit:
    """An estimated compute-optimal frontier.

    ``N_opt(C) = n_coeff * C**a`` and ``D_opt(C) = d_coeff * C**b``.
    ``intervals`` maps ``"a"``/``"b"`` to bootstrap summaries when computed.
    """

    approach: Approach
    a: float
    b: float
    n_coeff: float
    d_coeff: float
    diagnostics: Diagnostics
    params: ParametricParams | None = None
    intervals: dict[str, BootstrapSummary] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "approach", Approach.parse(self.approach))


# ---------------------------------------------------------------- runs CSV


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise DataError(f"line {line}, column {column!r}: cannot parse {text!r} as a number") from None


def _parse_count(text: str, line: int, column: str) -> int:
    value = _parse_float(text, line, column)
    if not math.isfinite(value) or value != int(value):
        raise DataError(f"line {line}, column {column!r}: expected an integer count, got {text!r}")
    return int(value)


def _read_rows(path, header: Sequence[str]) -> Iterable[tuple[int, dict[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, expected header {','.join(header)}")
        missing = [c for c in header if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: line 1: missing column(s) {missing}; expected header {','.join(header)}")
        for row in reader:
            if None in row.values() or None in row:
                raise DataError(f"{path}: line {reader.line_num}: wrong number of fields")
            yield reader.line_num, row


def runs_from_rows(rows: Iterable[tuple[int, dict[str, str]]]) -> list[RunRecord]:
    grouped: dict[str, list] = defaultdict(list)
    meta: dict[str, tuple[int, int, int]] = {}
    for line, row in rows:
        rid = row["run_id"].strip()
        if not rid:
            raise DataError(f"line {line}, column 'run_id': empty run id")
        n = _parse_count(row["n_params"], line, "n_params")
        cyc = _parse_count(row["cosine_cycle_tokens"], line, "cosine_cycle_tokens")
        tokens = _parse_float(row["tokens"], line, "tokens")
        loss = _parse_float(row["loss"], line, "loss")
        if not math.isfinite(loss) or loss <= 0:
            raise ValidationError(f"line {line}: loss must be positive and finite, got {row['loss']!r}", f"run {rid!r}")
        if not math.isfinite(tokens) or tokens <= 0:
            raise ValidationError(
                f"line {line}: tokens must be positive and finite, got {row['tokens']!r}", f"run {rid!r}"
            )
        if rid in meta and meta[rid][:2] != (n, cyc):
            raise ValidationError(
                f"line {line}: n_params/cosine_cycle_tokens differ from line {meta[rid][2]}", f"run {rid!r}"
            )
        meta.setdefault(rid, (n, cyc, line))
        grouped[rid].append((tokens, loss, line))

    runs = []
    for rid, pts in grouped.items():
        pts.sort(key=lambda p: p[0])
        for prev, cur in zip(pts, pts[1:]):
            if prev[0] == cur[0]:
                raise ValidationError(
                    f"duplicate tokens {cur[0]!r} on lines {prev[2]} and {cur[2]}", f"run {rid!r}"
                )
        n, cyc, _ = meta[rid]
        runs.append(RunRecord(rid, n, cyc, tuple((t, l) for t, l, _ in pts)))
    return runs


def load_runs(path, format: str | None = None) -> list[RunRecord]:
    """Load runs from a runs CSV or JSON file.

    Rows are grouped by ``run_id`` (in order of first appearance) and each
    run's points sorted ascending by tokens. The JSON form is a list of
    objects with keys ``run_id``, ``n_params``, ``cosine_cycle_tokens`` and
    ``points`` (a list of ``[tokens, loss]`` pairs).
    """
    format = format or _infer_format(path)
    if format == "csv":
        return runs_from_rows(_read_rows(path, RUNS_HEADER))
    if format == "json":
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(payload, list):
            raise DataError(f"{path}: expected a JSON list of runs")
        rows = []
        for i, obj in enumerate(payload):
            try:
                for t, l in obj["points"]:
                    rows.append(
                        (
                            i + 1,
                            {
                                "run_id": str(obj["run_id"]),
                                "n_params": str(obj["n_params"]),
                                "cosine_cycle_tokens": str(obj["cosine_cycle_tokens"]),
                                "tokens": str(t),
                                "loss": str(l),
                            },
                        )
                    )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: run entry {i}: malformed ({exc})") from None
        return runs_from_rows(rows)
    raise DataError(f"unknown runs format {format!r}")


def save_runs(runs: Sequence[RunRecord], path, format: str | None = None) -> None:
    format = format or _infer_format(path)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RUNS_HEADER)
            for run in runs:
                for t, l in run.points:
                    w.writerow([run.run_id, run.n_params, run.cosine_cycle_tokens, fmt(t), fmt(l)])
    elif format == "json":
        payload = [
            {
                "run_id": r.run_id,
                "n_params": r.n_params,
                "cosine_cycle_tokens": r.cosine_cycle_tokens,
                "points": [[t, l] for t, l in r.points],
            }
            for r in runs
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    else:
        raise DataError(f"unknown runs format {format!r}")


def _infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    return "json" if ext == ".json" else "csv"


# ------------------------------------------------------ final-points CSV


def as_points(points) -> np.ndarray:
    """Coerce ``(N, D, L)`` triples to a validated ``(k, 3)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"expected (N, D, L) triples, got array of shape {arr.shape}")
    bad = ~np.all(np.isfinite(arr) & (arr > 0), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"N, D and L must be positive and finite, got {tuple(arr[i])}", f"point {i}")
    return arr


def load_final_points(path) -> list[FinalPoint]:
    out = []
    for line, row in _read_rows(path, FINAL_POINTS_HEADER):
        vals = [_parse_float(row[c], line, c) for c in FINAL_POINTS_HEADER]
        for c, v in zip(FINAL_POINTS_HEADER, vals):
            if not math.isfinite(v) or v <= 0:
                raise ValidationError(f"line {line}: {c} must be positive and finite, got {row[c]!r}", f"line {line}")
        out.append(FinalPoint(*vals))
    if not out:
        raise DataError(f"{path}: no data rows")
    return out


def save_final_points(points, path) -> None:
    arr = as_points(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FINAL_POINTS_HEADER)
        for n, d, l in arr:
            w.writerow([fmt(n), fmt(d), fmt(l)])


# ----------------------------------------------------------------- fit JSON


def fit_to_dict(fit: ScalingFit) -> dict:
    for name in ("a", "b", "n_coeff", "d_coeff"):
        value = getattr(fit, name)
        if not math.isfinite(value):
            raise DataError(f"refusing to serialize non-finite {name} = {value!r}")
    out: dict = {
        "approach": fit.approach.value,
        "a": float(fit.a),
        "b": float(fit.b),
        "n_coeff": float(fit.n_coeff),
        "d_coeff": float(fit.d_coeff),
    }
    if fit.params is not None:
        out["params"] = fit.params.as_dict()
    diag = {}
    for key, value in vars(fit.diagnostics).items():
        if value is None:
            continue
        if isinstance(value, float) and not math.isfinite(value):
            raise DataError(f"refusing to serialize non-finite diagnostics.{key} = {value!r}")
        diag[key] = value
    out["diagnostics"] = diag
    if fit.intervals is not None:
        out["intervals"] = {k: dict(vars(v)) for k, v in fit.intervals.items()}
    return out


def fit_from_dict(obj: dict) -> ScalingFit:
    try:
        params = ParametricParams(**obj["params"]) if "params" in obj else None
        intervals = None
        if "intervals" in obj:
            intervals = {k: BootstrapSummary(**v) for k, v in obj["intervals"].items()}
        return ScalingFit(
            approach=Approach.parse(obj["approach"]),
            a=float(obj["a"]),
            b=float(obj["b"]),
            n_coeff=float(obj["n_coeff"]),
            d_coeff=float(obj["d_coeff"]),
            diagnostics=Diagnostics(**obj["diagnostics"]),
            params=params,
            intervals=intervals,
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed fit JSON: {exc}") from None


def save_fit(fit: ScalingFit, path) -> None:
    """Write ``fit`` as JSON. Optional keys are omitted rather than nulled.

    Floats are written with Python's shortest round-trip repr, which is
    lossless for float64.
    """
    payload = fit_to_dict(fit)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_fit(path) -> ScalingFit:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    return fit_from_dict(obj)
