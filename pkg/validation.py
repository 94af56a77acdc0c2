# validation.py
"""
Severity-graded audits of POMs and reconstruction results.

Outputs (write_audit):
 - <out_dir>/audit_results.json     (machine readable)
 - <out_dir>/audit_report.md        (human readable)
"""
import json
from pathlib import Path

import numpy as np
from scipy.linalg import eigvalsh

import config
from config import TOL
from errors import TomographyError
from pom import Pom, gram_analysis
from reconstruct import ReconstructionResult, extremal_residual
from utils import ensure_dirs, small_report, timestamp, write_json

SEVERITY = {
    "critical": {"emoji": "🔥", "label": "Critical"},
    "high":     {"emoji": "⚠️", "label": "High"},
    "medium":   {"emoji": "🟡", "label": "Medium"},
    "low":      {"emoji": "🟢", "label": "Low"},
}


def _new_results(subject: str):
    return {"run_time": timestamp(), "subject": subject, "checks": {}, "total_issues": 0}


def _register(results, name, count, severity, details=None):
    results["checks"][name] = {
        "count": int(count),
        "severity": SEVERITY[severity]["label"],
        "severity_emoji": SEVERITY[severity]["emoji"],
        "details": details or [],
    }
    results["total_issues"] += int(count)


def audit_pom(pom: Pom):
    results = _new_results(f"POM dim={pom.dim} K={len(pom)}")

    # ---------- Closure (Critical) ----------
    closure = float(np.linalg.norm(pom.effect_array.sum(axis=0) - np.eye(pom.dim)))
    if closure > TOL.pom_closure_atol:
        _register(results, "pom_closure", 1, "critical", details=[f"residual {closure:.3e}"])
    else:
        _register(results, "pom_closure", 0, "low")

    # ---------- Effect positivity (Critical) ----------
    bad = []
    for label, E in zip(pom.labels, pom.effect_array):
        w_min = float(eigvalsh(E)[0])
        if w_min < -TOL.positivity_atol:
            bad.append(f"{label}: {w_min:.3e}")
    _register(results, "negative_effects", len(bad), "critical" if bad else "low", details=bad[:10])

    # ---------- Hermiticity (High) ----------
    skew = [lab for lab, E in zip(pom.labels, pom.effect_array)
            if np.max(np.abs(E - E.conj().T)) > TOL.hermitian_atol]
    _register(results, "non_hermitian_effects", len(skew), "high" if skew else "low", details=skew[:10])

    # ---------- Informational completeness (Low, informative) ----------
    analysis = gram_analysis(pom)
    missing = pom.dim ** 2 - analysis.informational_rank
    _register(
        results, "unmeasured_operator_directions", missing, "low",
        details=[f"n_>0 = {analysis.informational_rank} of {pom.dim ** 2}"],
    )
    return results


def audit_reconstruction(
    result: ReconstructionResult,
    pom: Pom,
    counts,
    residual_tol: float = config.RESIDUAL_TOL,
):
    results = _new_results(f"reconstruction lambda={result.lam:g}")
    rho = result.estimator

    # ---------- Estimator trace and positivity (Critical) ----------
    tr = rho.trace()
    _register(results, "estimator_trace", int(abs(tr - 1) > TOL.trace_atol),
              "critical" if abs(tr - 1) > TOL.trace_atol else "low", details=[f"trace {tr:.15g}"])
    w_min = float(eigvalsh(rho.matrix)[0])
    _register(results, "estimator_positivity", int(w_min < -TOL.positivity_atol),
              "critical" if w_min < -TOL.positivity_atol else "low", details=[f"min eigenvalue {w_min:.3e}"])

    # ---------- Hermiticity (High) ----------
    skew = float(np.max(np.abs(rho.matrix - rho.matrix.conj().T)))
    _register(results, "estimator_hermiticity", int(skew > TOL.hermitian_atol),
              "high" if skew > TOL.hermitian_atol else "low")

    # ---------- Iterates stayed positive (High) ----------
    low = result.min_eigenvalue < TOL.iterate_min_eig
    _register(results, "iterate_min_eigenvalue", int(low), "high" if low else "low",
              details=[f"{result.min_eigenvalue:.3e}"])

    # ---------- Monotone objective (High) ----------
    steps = np.diff(np.asarray(result.objective_trace))
    drops = np.flatnonzero(steps < -1e-12)
    _register(results, "objective_decreases", len(drops), "high" if len(drops) else "low",
              details=[f"step {int(i) + 1}: {steps[i]:.3e}" for i in drops[:10]])

    # ---------- Extremal equations (Medium) ----------
    try:
        residual = extremal_residual(rho, counts, pom, result.lam)
    except TomographyError as e:
        _register(results, "extremal_residual", 1, "medium", details=[str(e)])
    else:
        bad_res = result.converged and residual > residual_tol * (1 + 1e-6) + 1e-15
        _register(results, "extremal_residual", int(bad_res), "medium" if bad_res else "low",
                  details=[f"||T rho|| = {residual:.3e}"])

    _register(results, "not_converged", int(not result.converged),
              "medium" if not result.converged else "low", details=[result.stop_reason])
    return results


def write_audit(results, out_dir):
    out_dir = Path(out_dir)
    ensure_dirs(out_dir)
    json_path = out_dir / "audit_results.json"
    write_json(json_path, results)

    md_lines = []
    md_lines.append("# Audit Report")
    md_lines.append("")
    md_lines.append(f"**Run:** {results['run_time']}")
    md_lines.append(f"**Subject:** {results['subject']}")
    md_lines.append(f"**Total issues found:** {results['total_issues']}")
    md_lines.append("")

    if results["total_issues"] == 0:
        md_lines.append("✔ No audit issues detected.")
    else:
        md_lines.append("## Issues by Severity")
        md_lines.append("")
        for sev in ["critical", "high", "medium", "low"]:
            for check_name, info in results["checks"].items():
                if info["severity"] == SEVERITY[sev]["label"] and info["count"]:
                    md_lines.append(f"- {info['severity_emoji']} **{info['severity']}** `{check_name}` : {info['count']} issues")
                    if info.get("details"):
                        md_lines.append(f"  - Examples: `{json.dumps(info['details'][:3], ensure_ascii=False)}`")
        md_lines.append("")

    md_path = out_dir / "audit_report.md"
    small_report(md_path, md_lines)
    return json_path, md_path
