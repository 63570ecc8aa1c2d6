import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalex.data_model import (
    Approach,
    BootstrapSummary,
    Diagnostics,
    ModelShape,
    ParametricParams,
    RunRecord,
    ScalingFit,
    load_final_points,
    load_fit,
    load_runs,
    save_final_points,
    save_fit,
    save_runs,
)
from scalex.errors import DataError, ValidationError

HEADER = "run_id,n_params,cosine_cycle_tokens,tokens,loss\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------- types


def test_model_shape_rejects_non_positive_fields():
    with pytest.raises(ValidationError):
        ModelShape(1, 2, 8, 1, 2, vocab_size=0)
    with pytest.raises(ValidationError):
        ModelShape(1, -2, 8, 1, 2)
    with pytest.raises(ValidationError):
        ModelShape(1, 2.5, 8, 1, 2)


def test_model_shape_does_not_tie_ffw_to_d_model():
    shape = ModelShape(2, 64, 100, 16, 4)
    assert shape.ffw_size == 100


def test_run_record_invariants():
    with pytest.raises(ValidationError, match="at least 2"):
        RunRecord("r", 10, 10, ((1.0, 2.0),))
    with pytest.raises(ValidationError, match="strictly increasing"):
        RunRecord("r", 10, 10, ((2.0, 2.0), (1.0, 1.0)))
    with pytest.raises(ValidationError, match="loss"):
        RunRecord("r", 10, 10, ((1.0, 2.0), (2.0, math.inf)))
    with pytest.raises(ValidationError) as exc:
        RunRecord("r7", 10, 10, ((1.0, 2.0), (2.0, 0.0)))
    assert exc.value.location == "run 'r7'"


def test_parametric_params_predict_exceeds_E():
    p = ParametricParams(1.69, 406.4, 410.7, 0.34, 0.28)
    assert p.predict(1e30, 1e30) > p.E
    with pytest.raises(ValidationError):
        ParametricParams(1.0, 1.0, 1.0, 0.0, 0.3)


def test_bootstrap_summary_requires_ordered_percentiles():
    with pytest.raises(ValidationError):
        BootstrapSummary(0.5, 0.6, 0.4, 100, 0.8, 0)


def test_approach_parse():
    assert Approach.parse("1") is Approach.ENVELOPE
    assert Approach.parse("isoflop") is Approach.ISOFLOP
    assert Approach.parse(3) is Approach.PARAMETRIC
    with pytest.raises(DataError):
        Approach.parse("4")


# ------------------------------------------------------------- runs I/O


def test_load_runs_groups_rows(tmp_path):
    path = write(tmp_path / "runs.csv", HEADER + "r1,1000,2e9,1e9,3.0\nr1,1000,2e9,2e9,2.5\n")
    runs = load_runs(path, "csv")
    assert len(runs) == 1
    assert runs[0].run_id == "r1"
    assert runs[0].points == ((1e9, 3.0), (2e9, 2.5))


def test_load_runs_sorts_points_and_keeps_first_appearance_order(tmp_path):
    text = HEADER + "b,10,5,2,1.0\na,20,5,3,2.0\nb,10,5,1,1.5\na,20,5,1,2.5\n"
    runs = load_runs(write(tmp_path / "r.csv", text))
    assert [r.run_id for r in runs] == ["b", "a"]
    assert runs[0].points == ((1.0, 1.5), (2.0, 1.0))


def test_load_runs_negative_loss_names_run_and_line(tmp_path):
    path = write(tmp_path / "runs.csv", HEADER + "r1,1000,2e9,1e9,3.0\nr1,1000,2e9,2e9,-1\n")
    with pytest.raises(ValidationError) as exc:
        load_runs(path)
    assert "line 3" in str(exc.value)
    assert "r1" in str(exc.value)


def test_load_runs_rejects_duplicate_tokens(tmp_path):
    path = write(tmp_path / "runs.csv", HEADER + "r1,1000,2e9,1e9,3.0\nr1,1000,2e9,1e9,2.9\n")
    with pytest.raises(ValidationError, match="duplicate tokens.*lines 2 and 3"):
        load_runs(path)


@pytest.mark.parametrize(
    "row, fragment",
    [
        ("r1,1000,2e9,abc,3.0\n", "line 2, column 'tokens'"),
        ("r1,10.5,2e9,1e9,3.0\n", "line 2, column 'n_params'"),
        ("r1,1000,2e9\n", "line 2"),
    ],
)
def test_parse_errors_carry_location(tmp_path, row, fragment):
    with pytest.raises(DataError, match=fragment):
        load_runs(write(tmp_path / "bad.csv", HEADER + row))


def test_missing_column_is_reported(tmp_path):
    with pytest.raises(DataError, match="missing column"):
        load_runs(write(tmp_path / "bad.csv", "run_id,tokens,loss\nr,1,2\n"))


def test_load_runs_accepts_json(tmp_path):
    payload = [{"run_id": "x", "n_params": 5, "cosine_cycle_tokens": 9, "points": [[2, 1.0], [1, 2.0]]}]
    path = tmp_path / "runs.json"
    path.write_text(json.dumps(payload))
    (run,) = load_runs(path)
    assert run.points == ((1.0, 2.0), (2.0, 1.0))


finite_pos = st.floats(min_value=1e-6, max_value=1e15, allow_nan=False, allow_infinity=False)


@st.composite
def run_lists(draw):
    runs = []
    for k in range(draw(st.integers(1, 4))):
        tokens = sorted(draw(st.sets(finite_pos, min_size=2, max_size=8)))
        losses = [draw(finite_pos) for _ in tokens]
        runs.append(
            RunRecord(f"run{k}", draw(st.integers(1, 10**12)), draw(st.integers(1, 10**13)), tuple(zip(tokens, losses)))
        )
    return runs


@settings(max_examples=40, deadline=None)
@given(runs=run_lists(), fmt=st.sampled_from(["csv", "json"]))
def test_runs_round_trip_exactly(tmp_path_factory, runs, fmt):
    path = tmp_path_factory.mktemp("rt") / f"runs.{fmt}"
    save_runs(runs, path)
    assert load_runs(path) == runs


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(finite_pos, finite_pos, finite_pos), min_size=1, max_size=20))
def test_final_points_round_trip_exactly(tmp_path_factory, pts):
    path = tmp_path_factory.mktemp("fp") / "points.csv"
    save_final_points(pts, path)
    assert [tuple(p) for p in load_final_points(path)] == pts


def test_final_points_reject_non_positive(tmp_path):
    with pytest.raises(ValidationError, match="line 3"):
        load_final_points(write(tmp_path / "p.csv", "n_params,tokens,loss\n1,2,3\n1,0,3\n"))


# -------------------------------------------------------------- fit JSON


def make_fit(**overrides):
    base = dict(
        approach=Approach.PARAMETRIC,
        a=0.1 + 0.2,
        b=1 - (0.1 + 0.2),
        n_coeff=math.pi / 7,
        d_coeff=1.0 / 3.0,
        diagnostics=Diagnostics(200, 1e-17, 3e-9, huber_total=2.5e-20, flops_min=6e18, flops_max=3e21),
        params=ParametricParams(1.69, 406.4, 410.7, 0.34, 0.28),
    )
    base.update(overrides)
    return ScalingFit(**base)


def test_fit_round_trip(tmp_path):
    fit = make_fit()
    save_fit(fit, tmp_path / "f.json")
    assert load_fit(tmp_path / "f.json") == fit


def test_fit_round_trip_with_intervals(tmp_path):
    iv = {"a": BootstrapSummary(0.45, 0.44, 0.46, 100, 0.8, 7), "b": BootstrapSummary(0.55, 0.54, 0.56, 100, 0.8, 7)}
    fit = make_fit(intervals=iv)
    save_fit(fit, tmp_path / "f.json")
    assert load_fit(tmp_path / "f.json") == fit


def test_absent_optionals_are_omitted_not_null(tmp_path):
    fit = make_fit(params=None, diagnostics=Diagnostics(3, 0.1, 0.2))
    save_fit(fit, tmp_path / "f.json")
    obj = json.loads((tmp_path / "f.json").read_text())
    assert "intervals" not in obj
    assert "params" not in obj
    assert "null" not in (tmp_path / "f.json").read_text()


def test_non_finite_exponent_is_refused(tmp_path):
    with pytest.raises(DataError, match="non-finite"):
        save_fit(make_fit(a=math.nan), tmp_path / "f.json")
    assert not (tmp_path / "f.json").exists()


@settings(max_examples=60, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64), finite_pos)
def test_fit_round_trip_is_bit_stable(tmp_path_factory, a, coeff):
    fit = make_fit(a=a, n_coeff=coeff)
    path = tmp_path_factory.mktemp("fit") / "f.json"
    save_fit(fit, path)
    back = load_fit(path)
    assert np.float64(back.a).tobytes() == np.float64(a).tobytes()
    assert back.n_coeff == coeff
