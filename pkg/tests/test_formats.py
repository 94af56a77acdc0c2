import json

import numpy as np
import pandas as pd
import pytest

from errors import InputError
from formats import (
    SWEEP_COLUMNS,
    load_counts,
    load_pom,
    load_state,
    operator_from_dict,
    operator_to_dict,
    pom_to_dict,
    read_json,
    result_to_dict,
    validate_counts_record,
    validate_pom_record,
    validate_settings_record,
    write_sweep_csv,
)
from linalg_core import pure_state
from reconstruct import IterationConfig, mlme_reconstruct
from simulate import SweepRecord


def _write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


# ---------- JSON reading ----------
def test_read_json_reports_line_and_column(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "counts": [1, 2,\n', encoding="utf-8")
    with pytest.raises(InputError, match="line 3"):
        read_json(p)


def test_read_json_missing_file(tmp_path):
    with pytest.raises(InputError, match="cannot read file"):
        read_json(tmp_path / "nope.json")


# ---------- Operators ----------
def test_operator_round_trip_is_exact():
    rho = pure_state([0.3, 0.1 + 0.7j, 1 / 3])
    rec = json.loads(json.dumps(operator_to_dict(rho)))
    back = operator_from_dict(rec)
    assert np.array_equal(back.matrix, rho.matrix)


def test_operator_record_errors():
    with pytest.raises(InputError, match="missing_im"):
        operator_from_dict({"dim": 2, "re": [[1, 0], [0, 0]]})
    with pytest.raises(InputError, match="re_not_2x2"):
        operator_from_dict({"dim": 2, "re": [[1, 0]], "im": [[0, 0], [0, 0]]})
    with pytest.raises(InputError):
        operator_from_dict({"dim": 2, "re": [[1, 1], [0, 0]], "im": [[0, 0], [0, 0]]})


def test_load_state_rejects_non_state(tmp_path):
    p = _write(tmp_path / "s.json", {"dim": 2, "re": [[2, 0], [0, 0]], "im": [[0, 0], [0, 0]]})
    with pytest.raises(InputError, match="trace"):
        load_state(p)


# ---------- POMs ----------
def test_pom_file_round_trip(tmp_path, trine):
    p = _write(tmp_path / "pom.json", pom_to_dict(trine))
    pom = load_pom(p)
    assert pom.labels == trine.labels
    assert np.allclose(pom.effect_array, trine.effect_array, atol=1e-15)


def test_load_named_and_settings_pom(tmp_path):
    assert len(load_pom(_write(tmp_path / "a.json", {"kind": "pauli"}))) == 6
    with pytest.raises(InputError, match="kind"):
        load_pom(_write(tmp_path / "b.json", {"kind": "sic"}))
    settings = {"settings": [{"theta": 0.0, "xs": [-1.0, 0.0, 1.0]}], "dim": 3}
    pom = load_pom(_write(tmp_path / "c.json", settings))
    assert len(pom) == 4
    assert pom.labels[-1] == "complement"


def test_pom_record_validator():
    ok, reasons = validate_pom_record({"effects": []})
    assert not ok and "no_effects" in reasons
    ok, reasons = validate_pom_record(
        {"effects": [{"dim": 1, "re": [[1]], "im": [[0]]}], "labels": ["a", "b"]}
    )
    assert not ok and "labels_length_mismatch" in reasons


def test_settings_validator():
    ok, reasons = validate_settings_record({"settings": [{"theta": "x", "xs": []}], "dim": 1, "mode": "?"})
    assert not ok
    assert set(reasons) == {"settings[0].invalid_theta", "settings[0].invalid_xs", "invalid_dim", "invalid_mode"}


# ---------- Counts ----------
def test_counts_validator():
    assert validate_counts_record({"counts": [6, 2, 1], "total": 9}) == (True, [])
    assert validate_counts_record({"counts": [6, 2, 1], "total": 10})[1] == ["total_differs_from_sum"]
    assert validate_counts_record({"counts": [1.5, 2]})[1] == ["counts_not_non_negative_integers"]
    assert validate_counts_record({"counts": [0, 0]})[1] == ["counts_sum_to_zero"]
    assert validate_counts_record({})[1] == ["no_counts"]


def test_load_counts_checks_length(tmp_path):
    p = _write(tmp_path / "counts.json", {"counts": [6, 2, 1], "total": 9})
    assert load_counts(p, expected_outcomes=3).total == 9
    with pytest.raises(InputError, match="4 outcomes"):
        load_counts(p, expected_outcomes=4)


# ---------- Results ----------
def test_result_dict(trine):
    result = mlme_reconstruct([0.5, 0.3, 0.2], trine, IterationConfig(lam=0.1))
    rec = result_to_dict(result)
    assert rec["lambda"] == 0.1
    assert rec["converged"] is True
    assert rec["estimator"]["dim"] == 2
    assert "objective_trace" not in rec
    assert len(result_to_dict(result, include_trace=True)["objective_trace"]) == result.iterations + 1


def test_sweep_csv_header(tmp_path):
    records = [
        SweepRecord(key=0.1, mean_entropy=0.5, mean_log_likelihood=-1.0, mean_trace_distance=0.1,
                    mean_w00=0.3, trials=2, converged_fraction=1.0),
        SweepRecord(key=1.0, mean_entropy=0.6, mean_log_likelihood=-1.1, mean_trace_distance=0.2,
                    mean_w00=0.2, trials=2, converged_fraction=0.5, failures=1),
    ]
    path = tmp_path / "out" / "sweep.csv"
    write_sweep_csv(records, path)
    df = pd.read_csv(path)
    assert list(df.columns[: len(SWEEP_COLUMNS)]) == SWEEP_COLUMNS
    assert "truncation_distance" not in df.columns
    assert df["failures"].tolist() == [0, 1]
