"""
formats.py
----------
External file formats: Hermitian operators, POMs, quadrature settings,
counts and reconstruction results as JSON, sweep tables as CSV.

Behaviour:
- Records are validated before use; validators return (ok, reasons).
- Malformed input raises InputError naming the file, field or line.
- Floats are written with full round-trip precision.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from config import POM_MODES
from errors import InputError, TomographyError
from functionals import CountData
from linalg_core import DensityMatrix, HermitianOperator
from pom import Pom, QuadratureSetting, homodyne_pom, named_pom
from utils import write_json

SWEEP_COLUMNS = ["key", "mean_entropy", "mean_loglik", "mean_trace_distance", "mean_w00", "trials"]
EXTRA_COLUMNS = ["converged_fraction", "failures", "truncation_distance", "informational_rank", "complete"]


# -------------------------------------------------------
# IO Helpers
# -------------------------------------------------------
def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"{path}: cannot read file ({e.strerror or e})")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _is_matrix(rows, dim: int) -> bool:
    return (
        isinstance(rows, list)
        and len(rows) == dim
        and all(isinstance(r, list) and len(r) == dim and all(_is_number(x) for x in r) for r in rows)
    )


# -------------------------------------------------------
# Validation Helpers
# -------------------------------------------------------
def validate_operator_record(rec) -> Tuple[bool, List[str]]:
    reasons = []
    if not isinstance(rec, dict):
        return False, ["not_an_object"]
    dim = rec.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        reasons.append("invalid_dim")
    else:
        for part in ("re", "im"):
            if part not in rec:
                reasons.append(f"missing_{part}")
            elif not _is_matrix(rec[part], dim):
                reasons.append(f"{part}_not_{dim}x{dim}_numbers")
    return (len(reasons) == 0, reasons)


def validate_pom_record(rec) -> Tuple[bool, List[str]]:
    reasons = []
    if not isinstance(rec, dict):
        return False, ["not_an_object"]
    effects = rec.get("effects")
    if not isinstance(effects, list) or len(effects) == 0:
        reasons.append("no_effects")
    else:
        for j, e in enumerate(effects):
            ok, why = validate_operator_record(e)
            if not ok:
                reasons.extend(f"effects[{j}].{r}" for r in why)
            elif isinstance(rec.get("dim"), int) and e["dim"] != rec["dim"]:
                reasons.append(f"effects[{j}].dim_mismatch")
    if "dim" in rec and not isinstance(rec["dim"], int):
        reasons.append("invalid_dim")
    labels = rec.get("labels")
    if labels is not None:
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            reasons.append("labels_not_strings")
        elif isinstance(effects, list) and len(labels) != len(effects):
            reasons.append("labels_length_mismatch")
    return (len(reasons) == 0, reasons)


def validate_settings_record(rec) -> Tuple[bool, List[str]]:
    reasons = []
    if not isinstance(rec, dict):
        return False, ["not_an_object"]
    settings = rec.get("settings")
    if not isinstance(settings, list) or len(settings) == 0:
        reasons.append("no_settings")
    else:
        for k, s in enumerate(settings):
            if not isinstance(s, dict) or not _is_number(s.get("theta")):
                reasons.append(f"settings[{k}].invalid_theta")
            xs = s.get("xs") if isinstance(s, dict) else None
            if not isinstance(xs, list) or not xs or not all(_is_number(x) for x in xs):
                reasons.append(f"settings[{k}].invalid_xs")
    dim = rec.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
        reasons.append("invalid_dim")
    if rec.get("mode", "scaled-complement") not in POM_MODES:
        reasons.append("invalid_mode")
    return (len(reasons) == 0, reasons)


def validate_counts_record(rec) -> Tuple[bool, List[str]]:
    reasons = []
    if not isinstance(rec, dict):
        return False, ["not_an_object"]
    counts = rec.get("counts")
    if not isinstance(counts, list) or len(counts) == 0:
        reasons.append("no_counts")
    elif not all(_is_number(n) and n >= 0 and float(n).is_integer() for n in counts):
        reasons.append("counts_not_non_negative_integers")
    elif sum(counts) <= 0:
        reasons.append("counts_sum_to_zero")
    total = rec.get("total")
    if total is not None:
        if not _is_number(total):
            reasons.append("invalid_total")
        elif isinstance(counts, list) and all(_is_number(n) for n in counts) and total != sum(counts):
            reasons.append("total_differs_from_sum")
    return (len(reasons) == 0, reasons)


def _require(ok_reasons: Tuple[bool, List[str]], what: str):
    ok, reasons = ok_reasons
    if not ok:
        raise InputError(f"{what}: {', '.join(reasons)}")


# -------------------------------------------------------
# Operators and POMs
# -------------------------------------------------------
def operator_to_dict(H: HermitianOperator) -> Dict[str, Any]:
    m = H.matrix
    return {"dim": H.dim, "re": m.real.tolist(), "im": m.imag.tolist()}


def operator_from_dict(rec, what: str = "operator") -> HermitianOperator:
    _require(validate_operator_record(rec), what)
    m = np.array(rec["re"], dtype=float) + 1j * np.array(rec["im"], dtype=float)
    try:
        return HermitianOperator(m)
    except TomographyError as e:
        raise InputError(f"{what}: {e}")


def state_from_dict(rec, what: str = "state") -> DensityMatrix:
    op = operator_from_dict(rec, what)
    try:
        return DensityMatrix(op.matrix)
    except TomographyError as e:
        raise InputError(f"{what}: {e}")


def pom_to_dict(pom: Pom) -> Dict[str, Any]:
    return {
        "dim": pom.dim,
        "effects": [operator_to_dict(e) for e in pom.effects],
        "labels": list(pom.labels),
    }


def pom_from_dict(rec, what: str = "POM") -> Pom:
    _require(validate_pom_record(rec), what)
    effects = [operator_from_dict(e, f"{what} effects[{j}]") for j, e in enumerate(rec["effects"])]
    try:
        return Pom(effects, labels=rec.get("labels"))
    except TomographyError as e:
        raise InputError(f"{what}: {e}")


def settings_from_dict(rec, what: str = "settings") -> Tuple[List[QuadratureSetting], int, str]:
    _require(validate_settings_record(rec), what)
    try:
        settings = [QuadratureSetting(theta=s["theta"], xs=tuple(s["xs"])) for s in rec["settings"]]
    except TomographyError as e:
        raise InputError(f"{what}: {e}")
    return settings, rec["dim"], rec.get("mode", "scaled-complement")


def settings_to_dict(settings: Sequence[QuadratureSetting], dim: int, mode: str) -> Dict[str, Any]:
    return {
        "settings": [{"theta": s.theta, "xs": list(s.xs)} for s in settings],
        "dim": dim,
        "mode": mode,
    }


def load_pom(path) -> Pom:
    """POM file, quadrature-settings file or named POM file."""
    rec = read_json(path)
    if isinstance(rec, dict) and "kind" in rec:
        try:
            return named_pom(rec["kind"])
        except TomographyError as e:
            raise InputError(f"{path}: field 'kind': {e}")
    if isinstance(rec, dict) and "settings" in rec:
        settings, dim, mode = settings_from_dict(rec, str(path))
        try:
            return homodyne_pom(settings, dim, mode)
        except TomographyError as e:
            raise InputError(f"{path}: {e}")
    return pom_from_dict(rec, str(path))


def load_state(path) -> DensityMatrix:
    return state_from_dict(read_json(path), str(path))


def load_counts(path, expected_outcomes: int | None = None) -> CountData:
    rec = read_json(path)
    _require(validate_counts_record(rec), str(path))
    if expected_outcomes is not None and len(rec["counts"]) != expected_outcomes:
        raise InputError(
            f"{path}: field 'counts' has {len(rec['counts'])} entries, POM has {expected_outcomes} outcomes"
        )
    return CountData.from_counts(rec["counts"])


# -------------------------------------------------------
# Results
# -------------------------------------------------------
def result_to_dict(result, include_trace: bool = False) -> Dict[str, Any]:
    out = {
        "estimator": operator_to_dict(result.estimator),
        "iterations": result.iterations,
        "residual": result.residual,
        "converged": result.converged,
        "lambda": result.lam,
        "stop_reason": result.stop_reason,
        "min_eigenvalue": result.min_eigenvalue,
        "epsilon": result.epsilon,
    }
    if include_trace:
        out["objective_trace"] = list(result.objective_trace)
    return out


def write_result(result, path, include_trace: bool = False):
    write_json(path, result_to_dict(result, include_trace))


def sweep_frame(records) -> pd.DataFrame:
    rows = []
    for r in records:
        row = {
            "key": r.key,
            "mean_entropy": r.mean_entropy,
            "mean_loglik": r.mean_log_likelihood,
            "mean_trace_distance": r.mean_trace_distance,
            "mean_w00": r.mean_w00,
            "trials": r.trials,
        }
        for col in EXTRA_COLUMNS:
            val = getattr(r, col, None)
            if val is not None:
                row[col] = val
        rows.append(row)
    df = pd.DataFrame(rows)
    extras = [c for c in EXTRA_COLUMNS if c in df.columns]
    return df.reindex(columns=SWEEP_COLUMNS + extras)


def write_sweep_csv(records, path) -> pd.DataFrame:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = sweep_frame(records)
    df.to_csv(path, index=False, float_format="%.12g", encoding="utf-8")
    return df
