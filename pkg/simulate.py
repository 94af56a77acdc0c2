"""
simulate.py
-----------
Synthetic-experiment harness: random true states, multinomial counts,
and the two sweep protocols with per-key averages.

Behaviour:
- lambda_sweep: one data set per trial, one reconstruction per lambda.
- dimension_sweep: POM built at dim_true, projected onto each
  reconstruction dimension; ML where the projection is complete,
  MLME otherwise.
- Trial t draws from its own SeedSequence child, so trials can run in
  any order (or in parallel) and still reproduce bit-for-bit.
- Failures are recorded per (key, trial) and the sweep continues.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

import config
from errors import DimensionMismatch, InvalidConfig, TomographyError
from formats import load_state
from functionals import (
    CountData,
    born_probabilities,
    normalized_log_likelihood,
    von_neumann_entropy,
    wigner_origin,
)
from linalg_core import DensityMatrix, embed, trace_distance, truncate
from pom import Pom, QuadratureSetting, gram_analysis, homodyne_pom, named_pom, project_pom
from reconstruct import IterationConfig, ReconstructionResult, ml_reconstruct, mlme_reconstruct
from utils import log_step

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


# -------------------------------------------------------
# Configuration
# -------------------------------------------------------
@dataclass(frozen=True)
class ExperimentConfig:
    dim_true: int
    seed: int
    pom_spec: Dict[str, Any] = field(default_factory=lambda: {"kind": "homodyne"})
    copies: int = config.DEFAULT_COPIES
    trials: int = config.DEFAULT_TRIALS
    lam: float = config.DEFAULT_LAMBDA
    recon_dims: tuple = ()
    lambdas: tuple = config.DEFAULT_LAMBDA_GRID
    noiseless: bool = False
    true_state_file: Optional[str] = None
    pom_mode: str = config.DEFAULT_POM_MODE
    epsilon: float = config.DEFAULT_EPSILON
    max_iters: int = config.DEFAULT_MAX_ITERS
    residual_tol: float = config.RESIDUAL_TOL
    workers: int = 1

    def __post_init__(self):
        if not self.recon_dims:
            object.__setattr__(self, "recon_dims", tuple(range(2, self.dim_true + 1)))
        object.__setattr__(self, "recon_dims", tuple(self.recon_dims))
        object.__setattr__(self, "lambdas", tuple(self.lambdas))
        self.validate()

    def validate(self):
        def bad(name, why):
            raise InvalidConfig(f"field '{name}': {why}")

        for name in ("dim_true", "copies", "trials", "max_iters", "workers"):
            val = getattr(self, name)
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                bad(name, f"must be a positive integer, got {val!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            bad("seed", f"must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.lam, (int, float)) or self.lam < 0:
            bad("lambda", f"must be a non-negative number, got {self.lam!r}")
        if any(not isinstance(d, int) or not 2 <= d <= self.dim_true for d in self.recon_dims):
            bad("recon_dims", f"entries must be integers in 2..{self.dim_true}")
        if not self.lambdas or any(not isinstance(x, (int, float)) or x <= 0 for x in self.lambdas):
            bad("lambdas", "must be a nonempty list of positive numbers")
        if list(self.lambdas) != sorted(self.lambdas):
            bad("lambdas", "must be sorted ascending")
        if self.pom_mode not in config.POM_MODES:
            bad("pom_mode", f"must be one of {config.POM_MODES}")
        kind = self.pom_spec.get("kind") if isinstance(self.pom_spec, dict) else None
        if kind not in ("homodyne", "trine", "pauli"):
            bad("pom_spec", "needs 'kind' of homodyne, trine or pauli")
        if kind in ("trine", "pauli") and self.dim_true != 2:
            bad("dim_true", f"{kind} POM is a qubit measurement, got dim_true={self.dim_true}")
        if kind == "homodyne" and self.dim_true < 2:
            bad("dim_true", "homodyne POM needs dim_true >= 2")

    @classmethod
    def from_dict(cls, rec: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(rec, dict):
            raise InvalidConfig("experiment config must be a JSON object")
        rec = dict(rec)
        if "lambda" in rec:
            rec["lam"] = rec.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(rec) - known)
        if unknown:
            raise InvalidConfig(f"unknown field(s): {', '.join(unknown)}")
        for name in ("dim_true", "seed"):
            if name not in rec:
                raise InvalidConfig(f"field '{name}': required")
        if "recon_dims" in rec:
            if not isinstance(rec["recon_dims"], list) or not rec["recon_dims"]:
                raise InvalidConfig("field 'recon_dims': must be a nonempty list")
        for name in ("recon_dims", "lambdas"):
            if name in rec and isinstance(rec[name], list):
                rec[name] = tuple(rec[name])
        try:
            return cls(**rec)
        except TypeError as e:
            raise InvalidConfig(str(e))

    def iteration_config(self, lam: float | None = None) -> IterationConfig:
        return IterationConfig(
            lam=self.lam if lam is None else lam,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            residual_tol=self.residual_tol,
        )


@dataclass(frozen=True)
class SweepRecord:
    key: float
    mean_entropy: float
    mean_log_likelihood: float
    mean_trace_distance: float
    mean_w00: float
    trials: int
    converged_fraction: float = float("nan")
    failures: int = 0
    truncation_distance: Optional[float] = None
    informational_rank: Optional[int] = None
    complete: Optional[bool] = None
    errors: tuple = ()


# -------------------------------------------------------
# Sampling
# -------------------------------------------------------
def random_density(dim: int, seed: SeedLike = None) -> DensityMatrix:
    """G G^dagger / tr(G G^dagger) with G standard complex normal."""
    if dim < 1:
        raise DimensionMismatch(f"dimension must be positive, got {dim}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return DensityMatrix.from_unnormalized(G @ G.conj().T)


def sample_counts(rho: DensityMatrix, pom: Pom, copies: int, seed: SeedLike = None) -> CountData:
    if copies < 1:
        raise InvalidConfig(f"copies must be positive, got {copies}")
    p = np.array(born_probabilities(rho, pom).values)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(copies, p / p.sum())
    return CountData.from_counts(counts)


def state_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(0,))


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(1, trial))


def build_pom(cfg: ExperimentConfig) -> Pom:
    spec = cfg.pom_spec
    if spec["kind"] != "homodyne":
        return named_pom(spec["kind"])
    settings = None
    if "settings" in spec:
        try:
            settings = [QuadratureSetting(theta=s["theta"], xs=tuple(s["xs"])) for s in spec["settings"]]
        except (KeyError, TypeError) as e:
            raise InvalidConfig(f"field 'pom_spec.settings': malformed setting ({e})")
    return homodyne_pom(settings, cfg.dim_true, cfg.pom_mode)


def true_state(cfg: ExperimentConfig) -> DensityMatrix:
    if cfg.true_state_file:
        rho = load_state(cfg.true_state_file)
        if rho.dim != cfg.dim_true:
            raise InvalidConfig(
                f"field 'true_state_file': state has dimension {rho.dim}, dim_true is {cfg.dim_true}"
            )
        return rho
    return random_density(cfg.dim_true, state_seed(cfg.seed))


def trial_data(cfg: ExperimentConfig, rho: DensityMatrix, pom: Pom, trial: int) -> CountData:
    if cfg.noiseless:
        return CountData.from_frequencies(born_probabilities(rho, pom).values, total=cfg.copies)
    return sample_counts(rho, pom, cfg.copies, trial_seed(cfg.seed, trial))


# -------------------------------------------------------
# Sweep plumbing
# -------------------------------------------------------
def _row(key, trial: int, result: ReconstructionResult, data: CountData, pom: Pom, rho_true: DensityMatrix) -> Dict:
    est = result.estimator
    return {
        "key": key,
        "trial": trial,
        "entropy": von_neumann_entropy(est),
        "loglik": normalized_log_likelihood(data, born_probabilities(est, pom)),
        "trace_distance": trace_distance(rho_true, embed(est, rho_true.dim)),
        "w00": wigner_origin(est),
        "converged": result.converged,
        "failed": False,
        "error": None,
    }


def _failed_row(key, trial: int, err: Exception) -> Dict:
    log_step(f"key={key:g} trial={trial}: {type(err).__name__}: {err}", "WARN")
    return {
        "key": key, "trial": trial,
        "entropy": np.nan, "loglik": np.nan, "trace_distance": np.nan, "w00": np.nan,
        "converged": False, "failed": True, "error": f"trial {trial}: {err}",
    }


def _run_trials(run_trial: Callable[[int], List[Dict]], cfg: ExperimentConfig, desc: str) -> pd.DataFrame:
    trials = range(cfg.trials)
    bar = dict(total=cfg.trials, desc=desc, disable=not config.SHOW_PROGRESS)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(tqdm(pool.map(run_trial, trials), **bar))
    else:
        chunks = [run_trial(t) for t in tqdm(trials, **bar)]
    rows = [row for chunk in chunks for row in chunk]
    return pd.DataFrame(rows).sort_values(["key", "trial"], kind="stable").reset_index(drop=True)


def _aggregate(df: pd.DataFrame, keys: Sequence, trials: int, extras: Dict | None = None) -> List[SweepRecord]:
    ok = df[~df["failed"]]
    means = ok.groupby("key").agg(
        mean_entropy=("entropy", "mean"),
        mean_log_likelihood=("loglik", "mean"),
        mean_trace_distance=("trace_distance", "mean"),
        mean_w00=("w00", "mean"),
        converged_fraction=("converged", "mean"),
    )
    records = []
    for key in keys:
        sub = df[df["key"] == key]
        stats = means.loc[key].to_dict() if key in means.index else {
            c: float("nan") for c in means.columns
        }
        failed = sub[sub["failed"]]
        records.append(
            SweepRecord(
                key=key,
                trials=trials,
                failures=int(len(failed)),
                errors=tuple(failed["error"]),
                **{k: float(v) for k, v in stats.items()},
                **(extras or {}).get(key, {}),
            )
        )
    return records


# -------------------------------------------------------
# Protocols
# -------------------------------------------------------
def lambda_sweep(cfg: ExperimentConfig, lambdas: Sequence[float] | None = None) -> List[SweepRecord]:
    lambdas = tuple(cfg.lambdas if lambdas is None else lambdas)
    if not lambdas or any(x <= 0 for x in lambdas) or list(lambdas) != sorted(lambdas):
        raise InvalidConfig("lambdas must be positive and sorted ascending")

    pom = build_pom(cfg)
    rho_true = true_state(cfg)
    log_step(
        f"Lambda sweep: {len(lambdas)} values x {cfg.trials} trials, D={cfg.dim_true}, K={len(pom)}, N={cfg.copies}"
    )

    def run_trial(t: int) -> List[Dict]:
        rows = []
        try:
            data = trial_data(cfg, rho_true, pom, t)
        except TomographyError as e:
            return [_failed_row(lam, t, e) for lam in lambdas]
        for lam in lambdas:
            try:
                res = mlme_reconstruct(data, pom, cfg.iteration_config(lam))
                rows.append(_row(lam, t, res, data, pom, rho_true))
            except TomographyError as e:
                rows.append(_failed_row(lam, t, e))
        return rows

    df = _run_trials(run_trial, cfg, "lambda sweep")
    records = _aggregate(df, lambdas, cfg.trials)
    log_step(f"Lambda sweep finished: {sum(r.failures for r in records)} failed reconstructions", "DONE")
    return records


def dimension_sweep(cfg: ExperimentConfig) -> List[SweepRecord]:
    dims = tuple(cfg.recon_dims)
    if not dims:
        raise InvalidConfig("field 'recon_dims': must be nonempty")
    pom_full = build_pom(cfg)
    rho_true = true_state(cfg)

    projected = {d: project_pom(pom_full, d) for d in dims}
    analyses = {d: gram_analysis(projected[d]) for d in dims}
    extras = {
        d: {
            "truncation_distance": trace_distance(rho_true, embed(truncate(rho_true, d), cfg.dim_true)),
            "informational_rank": analyses[d].informational_rank,
            "complete": analyses[d].complete,
        }
        for d in dims
    }
    for d in dims:
        verdict = "complete" if analyses[d].complete else "incomplete"
        log_step(f"d={d}: n_>0 = {analyses[d].informational_rank} of {d * d} ({verdict})", "DEBUG")
    log_step(f"Dimension sweep: dims {list(dims)} x {cfg.trials} trials, dim_true={cfg.dim_true}, N={cfg.copies}")

    def run_trial(t: int) -> List[Dict]:
        rows = []
        try:
            data = trial_data(cfg, rho_true, pom_full, t)
        except TomographyError as e:
            return [_failed_row(d, t, e) for d in dims]
        for d in dims:
            try:
                pom_d = projected[d]
                counts = np.concatenate([data.counts, np.zeros(len(pom_d) - len(data))])
                data_d = CountData.from_counts(counts)
                if analyses[d].complete:
                    res = ml_reconstruct(data_d, pom_d, cfg.iteration_config())
                else:
                    res = mlme_reconstruct(data_d, pom_d, cfg.iteration_config())
                rows.append(_row(d, t, res, data_d, pom_d, rho_true))
            except TomographyError as e:
                rows.append(_failed_row(d, t, e))
        return rows

    df = _run_trials(run_trial, cfg, "dimension sweep")
    records = _aggregate(df, dims, cfg.trials, extras)
    log_step(f"Dimension sweep finished: {sum(r.failures for r in records)} failed reconstructions", "DONE")
    return records
