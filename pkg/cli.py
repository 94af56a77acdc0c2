"""
cli.py
------
Command-line entry point:

  pom-info     POM_FILE                         Gram analysis and completeness verdict
  pom-build    --kind trine|pauli|homodyne      write a POM (or settings) file
  reconstruct  POM_FILE COUNTS_FILE --out FILE  MLME / ML estimate as JSON
  trine-demo                                    standard ME vs MLME on counts (6, 2, 1)
  sweep        CONFIG OUT_CSV --kind lambda|dimension
  sweep-lambda / sweep-dimension CONFIG OUT_CSV (aliases)

Behaviour:
- Reports go to stdout, log lines to stderr.
- Sweeps run as steps of a pipeline; a run manifest with per-step status
  and elapsed time is written next to the logs.
- Exit codes: 0 success, 1 demo contradiction, 2 input error,
  3 non-convergence, 4 partial sweep failure.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

from tabulate import tabulate

import config
from errors import InputError, TomographyError
from formats import (
    load_counts,
    load_pom,
    pom_to_dict,
    read_json,
    settings_to_dict,
    write_result,
    write_sweep_csv,
)
from functionals import CountData, bloch_vector
from pom import default_settings, gram_analysis, homodyne_pom, named_pom
from reconstruct import IterationConfig, MaxEntParams, mlme_reconstruct, standard_me_solve
from simulate import ExperimentConfig, dimension_sweep, lambda_sweep
from utils import log_step, set_log_level, timestamp, write_json
from validation import audit_pom, audit_reconstruction, write_audit

EXIT_OK = 0
EXIT_CONTRADICTION = 1
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_PARTIAL = 4

TRINE_COUNTS = (6, 2, 1)
TRINE_BLOCH = (0.194, 0.0, 0.981)
TRINE_BLOCH_TOL = 0.005


def _fmt(v: float, digits: int = 3) -> str:
    return f"{round(v, digits) + 0.0:.{digits}f}"


# ------------------------------------------------------------
# Step executor
# ------------------------------------------------------------
def run_step(step_name: str, fn, run_args=None):
    """Run one pipeline step; returns (status record, output, exception)."""
    start = time.time()
    status = {
        "step": step_name,
        "started_at": timestamp(),
        "status": "not_run",
        "error": None,
        "elapsed_s": None,
    }
    output, error = None, None
    log_step(f"Running {step_name}...")
    try:
        output = fn(**run_args) if run_args else fn()
        status["status"] = "success"
        log_step(f"{step_name} completed", "DONE")
    except Exception as e:
        error = e
        status["status"] = "failed"
        status["error"] = {"type": type(e).__name__, "message": str(e), "traceback": traceback.format_exc()}
        log_step(f"{step_name} failed: {e}", "ERROR")
    finally:
        status["elapsed_s"] = round(time.time() - start, 2)
        status["finished_at"] = timestamp()
    return status, output, error


# ------------------------------------------------------------
# Commands
# ------------------------------------------------------------
def cmd_pom_info(args) -> int:
    try:
        pom = load_pom(args.pom_file)
    except TomographyError as e:
        log_step(str(e), "ERROR")
        return EXIT_INPUT

    analysis = gram_analysis(pom)
    D2 = pom.dim ** 2
    rows = [
        (k, f"{w:.6e}", "yes" if k < analysis.informational_rank else "no")
        for k, w in enumerate(analysis.eigenvalues)
    ]
    print(f"dim = {pom.dim}")
    print(f"K = {len(pom)}")
    print(f"closure residual = {pom.closure_residual:.3e}")
    print("Gram eigenvalues:")
    print(tabulate(rows, headers=["k", "eigenvalue", "counted"], tablefmt="github"))
    print(f"rank tolerance = {analysis.rank_tolerance:.3e}")
    verdict = "COMPLETE" if analysis.complete else "INCOMPLETE"
    print(f"n_>0 = {analysis.informational_rank} of {D2}: {verdict}")

    if args.report_dir:
        audit = audit_pom(pom)
        _, md_path = write_audit(audit, args.report_dir)
        print(f"audit: {audit['total_issues']} issues -> {md_path}")
    return EXIT_OK


def cmd_pom_build(args) -> int:
    if args.kind in ("trine", "pauli"):
        rec = pom_to_dict(named_pom(args.kind))
    elif args.settings_only:
        rec = settings_to_dict(default_settings(), args.dim, args.mode)
    else:
        try:
            rec = pom_to_dict(homodyne_pom(default_settings(), args.dim, args.mode))
        except TomographyError as e:
            log_step(str(e), "ERROR")
            return EXIT_INPUT
    write_json(args.out, rec)
    print(f"wrote {args.kind} POM -> {args.out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    try:
        pom = load_pom(args.pom_file)
        counts = load_counts(args.counts_file, expected_outcomes=len(pom))
        cfg = IterationConfig(
            lam=args.lam, epsilon=args.epsilon, max_iters=args.max_iters, residual_tol=args.tol
        )
    except TomographyError as e:
        log_step(str(e), "ERROR")
        return EXIT_INPUT

    try:
        result = mlme_reconstruct(counts, pom, cfg)
    except TomographyError as e:
        log_step(f"reconstruction failed: {e}", "ERROR")
        return EXIT_INPUT

    write_result(result, args.out, include_trace=args.include_trace)
    print(f"lambda = {result.lam:g}")
    print(f"converged = {result.converged} ({result.stop_reason})")
    print(f"iterations = {result.iterations}")
    print(f"residual = {result.residual:.3e}")
    if pom.dim == 2:
        x, y, z = bloch_vector(result.estimator)
        print(f"Bloch: ({_fmt(x)}, {_fmt(y)}, {_fmt(z)})")
    print(f"estimator -> {args.out}")

    if args.report_dir:
        audit = audit_reconstruction(result, pom, counts, residual_tol=args.tol)
        _, md_path = write_audit(audit, args.report_dir)
        print(f"audit: {audit['total_issues']} issues -> {md_path}")

    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_trine_demo(args) -> int:
    pom = named_pom("trine")
    data = CountData.from_counts(TRINE_COUNTS)
    ok = True
    print(f"trine POM, counts {TRINE_COUNTS}, N = {int(data.total)}")

    me = standard_me_solve(data, pom)
    if isinstance(me, MaxEntParams):
        ok = False
        print(f"standard ME: FEASIBLE (residual {me.residual:.3e})")
    else:
        print(f"standard ME: INFEASIBLE ({me.reason}, best residual {me.best_residual:.4f})")

    result = mlme_reconstruct(data, pom, IterationConfig(lam=args.lam))
    bloch = bloch_vector(result.estimator)
    print(f"MLME Bloch: ({', '.join(_fmt(v) for v in bloch)})")
    if not result.converged or any(abs(b - e) > TRINE_BLOCH_TOL for b, e in zip(bloch, TRINE_BLOCH)):
        ok = False
        print(f"MLME estimate differs from {TRINE_BLOCH} by more than {TRINE_BLOCH_TOL}")
    return EXIT_OK if ok else EXIT_CONTRADICTION


def cmd_sweep(args) -> int:
    run_id = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    manifest = {
        "run_id": run_id,
        "command": f"sweep --kind {args.kind}",
        "seed_override": args.seed,
        "started_at": timestamp(),
        "steps": [],
    }

    def load_config():
        rec = read_json(args.config_file)
        if args.seed is not None and isinstance(rec, dict):
            rec = {**rec, "seed": args.seed}
        return ExperimentConfig.from_dict(rec)

    status, cfg, err = run_step("LOAD_CONFIG", load_config)
    manifest["steps"].append(status)
    exit_code = EXIT_OK
    records = None

    if err is None:
        sweep_fn = lambda_sweep if args.kind == "lambda" else dimension_sweep
        status, records, err = run_step("SWEEP", sweep_fn, {"cfg": cfg})
        manifest["steps"].append(status)
    if err is None:
        status, _, err = run_step("WRITE_CSV", write_sweep_csv, {"records": records, "path": args.out_csv})
        manifest["steps"].append(status)

    if err is not None:
        if not isinstance(err, (TomographyError, OSError)):
            step = manifest["steps"][-1]["step"]
            log_step(f"unexpected {type(err).__name__} in {step}; traceback in the run manifest", "CRIT")
        exit_code = EXIT_INPUT
    else:
        for r in records:
            print(
                f"key={r.key:g} S={r.mean_entropy:.6f} logL/N={r.mean_log_likelihood:.6f} "
                f"D_tr={r.mean_trace_distance:.6f} W00={r.mean_w00:.6f} "
                f"converged={r.converged_fraction:.2f} failures={r.failures}"
            )
        failed = sum(r.failures for r in records)
        if failed:
            exit_code = EXIT_PARTIAL
            log_step(f"{failed} reconstructions failed; CSV holds the successful trials", "WARN")
        print(f"sweep CSV -> {args.out_csv}")

    statuses = [s["status"] for s in manifest["steps"]]
    manifest["summary"] = {
        "total_steps": len(statuses),
        "successful_steps": statuses.count("success"),
        "failed_steps": statuses.count("failed"),
        "exit_code": exit_code,
        "finished_at": timestamp(),
        "elapsed_total_s": sum(s["elapsed_s"] or 0 for s in manifest["steps"]),
    }
    manifest_dir = Path(args.manifest_dir) if args.manifest_dir else config.LOG_DIR
    out_file = manifest_dir / f"run_report_{run_id}.json"
    write_json(out_file, manifest)
    log_step(f"Manifest saved -> {out_file}")
    return exit_code


# ------------------------------------------------------------
# Argument parsing
# ------------------------------------------------------------
def _add_sweep_args(p: argparse.ArgumentParser):
    p.add_argument("config_file", help="experiment config JSON")
    p.add_argument("out_csv", help="output CSV path")
    p.add_argument("--manifest-dir", default=None, help="where the run manifest goes (default output/logs)")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed in the config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlme", description="Maximum-likelihood maximum-entropy state reconstruction"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="show DEBUG log lines")
    verbosity.add_argument("--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pom-info", help="Gram analysis of a POM")
    p.add_argument("pom_file")
    p.add_argument("--report-dir", nargs="?", const=str(config.REPORT_DIR), default=None,
                   help="write an audit of the POM here (default output/reports)")
    p.set_defaults(func=cmd_pom_info)

    p = sub.add_parser("pom-build", help="write a POM file")
    p.add_argument("--kind", choices=["trine", "pauli", "homodyne"], required=True)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--mode", choices=list(config.POM_MODES), default=config.DEFAULT_POM_MODE)
    p.add_argument("--settings-only", action="store_true", help="write the quadrature settings file instead")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pom_build)

    p = sub.add_parser("reconstruct", help="MLME estimate from counts")
    p.add_argument("pom_file")
    p.add_argument("counts_file")
    p.add_argument("--lambda", dest="lam", type=float, default=config.DEFAULT_LAMBDA)
    p.add_argument("--epsilon", type=float, default=config.DEFAULT_EPSILON)
    p.add_argument("--max-iters", type=int, default=config.DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=config.RESIDUAL_TOL)
    p.add_argument("--out", required=True)
    p.add_argument("--include-trace", action="store_true", help="store the objective trace")
    p.add_argument("--report-dir", nargs="?", const=str(config.REPORT_DIR), default=None,
                   help="write an audit of the result here (default output/reports)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("trine-demo", help="standard ME vs MLME on the trine example")
    p.add_argument("--lambda", dest="lam", type=float, default=config.DEFAULT_LAMBDA)
    p.set_defaults(func=cmd_trine_demo)

    p = sub.add_parser("sweep", help="lambda or dimension sweep")
    _add_sweep_args(p)
    p.add_argument("--kind", choices=["lambda", "dimension"], required=True)
    p.set_defaults(func=cmd_sweep)

    for kind in ("lambda", "dimension"):
        p = sub.add_parser(f"sweep-{kind}", help=f"alias of sweep --kind {kind}")
        _add_sweep_args(p)
        p.set_defaults(func=cmd_sweep, kind=kind)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    set_log_level("DEBUG" if args.verbose else "WARN" if args.quiet else "INFO")
    try:
        return args.func(args)
    except InputError as e:
        log_step(str(e), "ERROR")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
