"""
reconstruct.py
--------------
State estimators:
- mlme_reconstruct: fixed-point ascent of lambda*S(rho) + (1/N) log L(rho),
  rho -> (1 + eps T) rho (1 + eps T) / tr(...), started from the
  maximally mixed state.
- ml_reconstruct: the same iteration at lambda = 0.
- standard_me_solve: entropy maximization under exact probability
  constraints, solved on the convex dual; reports infeasible data.
- linear_inversion: least-squares inversion on the measurement basis.

Step control: a step that lowers the objective is rejected and the step
size halved; GROW_AFTER consecutive accepted steps double it (capped).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

import config
from config import TOL
from errors import DimensionMismatch, InvalidConfig, MaxItersExceeded, ZeroProbabilityOutcome
from functionals import (
    CountData,
    as_frequencies,
    born_array,
    entropy_from_eigenvalues,
    loglik_array,
    r_array,
    t_array,
    t_operator,
)
from linalg_core import (
    DensityMatrix,
    HermitianOperator,
    gibbs_state,
    hermitian_eigh,
    trace_distance,
)
from pom import OperatorBasis, Pom, build_operator_basis, from_coordinates
from utils import log_step


# -------------------------------------------------------
# Configuration and results
# -------------------------------------------------------
@dataclass(frozen=True)
class IterationConfig:
    lam: float = config.DEFAULT_LAMBDA
    epsilon: float = config.DEFAULT_EPSILON
    max_iters: int = config.DEFAULT_MAX_ITERS
    residual_tol: float = config.RESIDUAL_TOL
    objective_tol: float = config.OBJECTIVE_TOL
    log_floor: float = TOL.log_floor
    epsilon_max: float = config.EPSILON_MAX
    stall_window: int = config.STALL_WINDOW
    grow_after: int = config.GROW_AFTER

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidConfig(f"lambda must be non-negative, got {self.lam}")
        if not 0 < self.epsilon <= 1:
            raise InvalidConfig(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.epsilon <= self.epsilon_max <= 1:
            raise InvalidConfig(f"epsilon_max must lie in [epsilon, 1], got {self.epsilon_max}")
        if int(self.max_iters) < 1:
            raise InvalidConfig(f"max_iters must be positive, got {self.max_iters}")
        for name in ("residual_tol", "objective_tol", "log_floor"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")
        if self.stall_window < 1 or self.grow_after < 1:
            raise InvalidConfig("stall_window and grow_after must be positive")


@dataclass(frozen=True)
class ReconstructionResult:
    estimator: DensityMatrix
    iterations: int
    residual: float
    objective_trace: List[float]
    converged: bool
    min_eigenvalue: float
    epsilon: float
    stop_reason: str
    lam: float

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


@dataclass(frozen=True)
class MaxEntParams:
    mus: np.ndarray
    state: DensityMatrix
    residual: float
    iterations: int


@dataclass(frozen=True)
class Infeasible:
    best_residual: float
    mu_norm: float
    iterations: int
    reason: str


@dataclass(frozen=True)
class EstimatorForm:
    mus: np.ndarray
    state: DensityMatrix
    distance: float


# -------------------------------------------------------
# Fixed-point iteration
# -------------------------------------------------------
@dataclass
class _Iterate:
    rho: np.ndarray
    w: np.ndarray
    V: np.ndarray
    p: np.ndarray
    objective: float
    T: np.ndarray = field(default=None)
    residual: float = np.inf


def _evaluate(rho: np.ndarray, f: np.ndarray, effects: np.ndarray, lam: float) -> _Iterate:
    w, V = hermitian_eigh(rho)
    p = born_array(rho, effects)
    obj = loglik_array(f, p)
    if lam > 0 and np.isfinite(obj):
        obj += lam * entropy_from_eigenvalues(w)
    return _Iterate(rho=rho, w=w, V=V, p=p, objective=obj)


def _attach_gradient(it: _Iterate, f: np.ndarray, effects: np.ndarray, cfg: IterationConfig):
    R = r_array(f, it.p, effects)
    it.T = t_array(R, it.w, it.V, cfg.lam, cfg.log_floor)
    it.residual = float(np.linalg.norm(it.T @ it.rho))


def _accept_slack(obj: float) -> float:
    return config.ACCEPT_ULPS * np.finfo(float).eps * max(1.0, abs(obj))


def mlme_reconstruct(
    f: Union[CountData, np.ndarray],
    pom: Pom,
    cfg: IterationConfig | None = None,
    *,
    initial: DensityMatrix | None = None,
    strict: bool = False,
) -> ReconstructionResult:
    cfg = IterationConfig() if cfg is None else cfg
    freqs = as_frequencies(f)
    effects = pom.effect_array
    D = pom.dim
    if len(freqs) != len(pom):
        raise DimensionMismatch(f"{len(freqs)} frequencies for a POM with {len(pom)} outcomes")
    if initial is not None and initial.dim != D:
        raise DimensionMismatch(f"initial state dimension {initial.dim} vs POM dimension {D}")

    rho0 = np.eye(D, dtype=complex) / D if initial is None else np.array(initial.matrix)
    cur = _evaluate(rho0, freqs, effects, cfg.lam)
    for j in np.flatnonzero(freqs > 0):
        if cur.p[j] < TOL.zero_probability:
            raise ZeroProbabilityOutcome(int(j), float(freqs[j]), float(cur.p[j]))
    _attach_gradient(cur, freqs, effects, cfg)

    eps = cfg.epsilon
    eps_cap = cfg.epsilon_max
    window_start = 0
    trace = [cur.objective]
    residuals = [cur.residual]
    min_eig = float(cur.w[-1])
    accepted = attempts = streak = 0
    stop_reason = "max_iters"
    identity = np.eye(D)

    while True:
        if cur.residual <= cfg.residual_tol:
            stop_reason = "converged"
            break
        if attempts >= cfg.max_iters:
            break
        attempts += 1

        K = identity + eps * cur.T
        cand = K @ cur.rho @ K.conj().T
        cand = 0.5 * (cand + cand.conj().T)
        cand /= np.trace(cand).real
        nxt = _evaluate(cand, freqs, effects, cfg.lam)

        if np.isfinite(nxt.objective) and nxt.objective >= cur.objective - _accept_slack(cur.objective):
            _attach_gradient(nxt, freqs, effects, cfg)
            cur = nxt
            accepted += 1
            streak += 1
            trace.append(cur.objective)
            residuals.append(cur.residual)
            min_eig = min(min_eig, float(cur.w[-1]))
            if streak >= cfg.grow_after:
                eps = min(2 * eps, eps_cap)
                streak = 0
            if accepted % config.LOG_EVERY == 0:
                log_step(
                    f"step {accepted}: objective={cur.objective:.12g} residual={cur.residual:.3e} eps={eps:g}",
                    "DEBUG",
                )
            n = cfg.stall_window
            if len(trace) - window_start > n:
                change = abs(trace[-1] - trace[-1 - n]) / max(1.0, abs(trace[-1]))
                if change <= cfg.objective_tol and residuals[-1] >= residuals[-1 - n]:
                    # overshooting steps: the residual oscillates while the objective is flat
                    eps *= 0.5
                    eps_cap = max(eps, config.EPSILON_MIN)
                    streak = 0
                    window_start = len(trace) - 1
                    if eps < config.EPSILON_MIN:
                        stop_reason = "stalled"
                        break
        else:
            eps *= 0.5
            streak = 0
            if eps < config.EPSILON_MIN:
                stop_reason = "stalled"
                break

    result = ReconstructionResult(
        estimator=DensityMatrix(cur.rho),
        iterations=accepted,
        residual=cur.residual,
        objective_trace=trace,
        converged=stop_reason == "converged",
        min_eigenvalue=min_eig,
        epsilon=eps,
        stop_reason=stop_reason,
        lam=cfg.lam,
    )
    if result.converged:
        log_step(
            f"lambda={cfg.lam:g}: converged after {accepted} steps, residual {cur.residual:.3e}",
            "DEBUG",
        )
    else:
        log_step(
            f"lambda={cfg.lam:g}: {stop_reason} after {accepted} accepted of {attempts} attempted steps, "
            f"residual {cur.residual:.3e} > {cfg.residual_tol:.0e}",
            "WARN",
        )
        if strict:
            raise MaxItersExceeded(result)
    return result


def ml_reconstruct(
    f: Union[CountData, np.ndarray],
    pom: Pom,
    cfg: IterationConfig | None = None,
    *,
    initial: DensityMatrix | None = None,
    strict: bool = False,
) -> ReconstructionResult:
    cfg = IterationConfig() if cfg is None else cfg
    return mlme_reconstruct(f, pom, dataclasses.replace(cfg, lam=0.0), initial=initial, strict=strict)


def extremal_residual(rho: DensityMatrix, f, pom: Pom, lam: float) -> float:
    """||T rho||_F, zero exactly at a stationary point."""
    T = t_operator(rho, f, pom, lam)
    return float(np.linalg.norm(T.matrix @ rho.matrix))


# -------------------------------------------------------
# Standard maximum entropy on the dual
# -------------------------------------------------------
def _me_dual(mu: np.ndarray, f: np.ndarray, effects: np.ndarray):
    H = np.einsum("j,jab->ab", mu, effects)
    w, V = hermitian_eigh(H)
    lse = logsumexp(w)
    q = np.exp(w - lse)
    sigma = (V * q) @ V.conj().T
    return float(lse - mu @ f), born_array(sigma, effects), sigma, (w, V, q)


def _me_hessian(w: np.ndarray, V: np.ndarray, q: np.ndarray, effects: np.ndarray) -> np.ndarray:
    """Hessian of log tr exp(sum mu_j Pi_j) from divided differences of exp in the eigenbasis."""
    span = np.abs(w[:, None] - w[None, :])
    upper = np.maximum(q[:, None], q[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(span > 1e-12, upper * -np.expm1(-span) / span, upper)
    P = np.einsum("ai,jab,bk->jik", V.conj(), effects, V)
    p = np.einsum("i,jii->j", q, P).real
    return np.einsum("xik,ik,yik->xy", P.conj(), L, P).real - np.outer(p, p)


def standard_me_solve(
    f: Union[CountData, np.ndarray],
    pom: Pom,
    max_iters: int = config.ME_MAX_ITERS,
    tol: float = config.ME_TOL,
    mu_bound: float = config.ME_MU_BOUND,
) -> Union[MaxEntParams, Infeasible]:
    """Seek exp(sum mu_j Pi_j)/Z with Born probabilities f.

    Minimizes the convex dual log tr exp(sum mu_j Pi_j) - mu.f, whose
    gradient is p(mu) - f: a BFGS pass, then damped Newton steps on the
    exact Hessian to polish. Data no state can reproduce leave the dual
    unbounded below and mu runs off past mu_bound.
    """
    freqs = as_frequencies(f)
    effects = pom.effect_array
    if len(freqs) != len(pom):
        raise DimensionMismatch(f"{len(freqs)} frequencies for a POM with {len(pom)} outcomes")

    def dual(mu):
        g, p, _, _ = _me_dual(mu, freqs, effects)
        return g, p - freqs

    res = minimize(
        dual,
        np.zeros(len(pom)),
        jac=True,
        method="BFGS",
        options={"gtol": tol / np.sqrt(len(pom)), "maxiter": max_iters},
    )
    mu = res.x
    iterations = int(res.nit)
    if not np.all(np.isfinite(mu)):
        best = float(np.linalg.norm(res.jac)) if np.all(np.isfinite(res.jac)) else np.inf
        log_step("standard ME: multipliers overflowed", "DEBUG")
        return Infeasible(best_residual=best, mu_norm=np.inf, iterations=iterations, reason="diverged")
    g, p, sigma, eig = _me_dual(mu, freqs, effects)
    residual = best = float(np.linalg.norm(p - freqs))

    while residual > tol and np.max(np.abs(mu)) <= mu_bound and iterations < max_iters:
        grad = p - freqs
        step, *_ = np.linalg.lstsq(_me_hessian(*eig, effects), -grad, rcond=None)
        slope = float(grad @ step)
        t, moved = 1.0, False
        while t >= 1e-10:
            cand = mu + t * step
            g_new, p_new, sigma_new, eig_new = _me_dual(cand, freqs, effects)
            r_new = float(np.linalg.norm(p_new - freqs))
            if g_new <= g + 1e-4 * t * slope or r_new < residual:
                moved = True
                break
            t *= 0.5
        if not moved:
            break
        iterations += 1
        mu, g, p, sigma, eig, residual = cand, g_new, p_new, sigma_new, eig_new, r_new
        best = min(best, residual)

    mu_norm = float(np.max(np.abs(mu)))
    if mu_norm > mu_bound:
        log_step(f"standard ME: |mu| = {mu_norm:.3g} diverged, best residual {best:.3e}", "DEBUG")
        return Infeasible(best_residual=best, mu_norm=mu_norm, iterations=iterations, reason="diverged")
    if residual <= tol:
        log_step(f"standard ME: feasible after {iterations} steps, residual {residual:.3e}", "DEBUG")
    else:
        log_step(
            f"standard ME: multipliers bounded (|mu| = {mu_norm:.3g}) but residual {residual:.3e} > {tol:.0e}",
            "WARN",
        )
    return MaxEntParams(mus=mu, state=DensityMatrix(sigma), residual=residual, iterations=iterations)


# -------------------------------------------------------
# Oracles and estimator diagnostics
# -------------------------------------------------------
def linear_inversion(
    f: Union[CountData, np.ndarray], pom: Pom, basis: OperatorBasis | None = None
) -> HermitianOperator:
    """Least-squares solution of sum_k a_jk c_k = f_j, mapped back to an operator."""
    basis = build_operator_basis(pom) if basis is None else basis
    freqs = as_frequencies(f)
    if len(freqs) != len(pom):
        raise DimensionMismatch(f"{len(freqs)} frequencies for a POM with {len(pom)} outcomes")
    c, *_ = np.linalg.lstsq(basis.expansion, freqs, rcond=None)
    return HermitianOperator(from_coordinates((c @ basis.measurement_coords)[None], pom.dim)[0])


def mlme_estimator_form(
    rho: DensityMatrix, f: Union[CountData, np.ndarray], pom: Pom, lam: float
) -> EstimatorForm:
    """Multipliers mu_j = f_j / (lam p_j) and the distance of rho to exp(sum mu_j Pi_j)/Z."""
    if not lam > 0:
        raise InvalidConfig(f"estimator form needs lambda > 0, got {lam}")
    freqs = as_frequencies(f)
    p = born_array(rho.matrix, pom.effect_array)
    mus = np.zeros(len(pom))
    mask = freqs > 0
    mus[mask] = freqs[mask] / (lam * p[mask])
    state = gibbs_state(np.einsum("j,jab->ab", mus, pom.effect_array))
    return EstimatorForm(mus=mus, state=state, distance=trace_distance(rho, state))
