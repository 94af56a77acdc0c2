"""
functionals.py
--------------
Information functionals over states and data: Born probabilities,
likelihood, entropies, the penalized objective, the R and T operators
of the fixed-point iteration, and the Wigner value at the origin.

Boundary cases follow sentinel conventions: a likelihood of -inf and a
relative entropy of +inf when an observed outcome has zero probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config import TOL
from errors import (
    DimensionMismatch,
    InvalidConfig,
    InvalidProbability,
    ZeroProbabilityOutcome,
)
from linalg_core import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    DensityMatrix,
    HermitianOperator,
    hermitian_eigh,
)
from pom import Pom


# -------------------------------------------------------
# Data carriers
# -------------------------------------------------------
@dataclass(frozen=True)
class CountData:
    counts: np.ndarray
    total: float
    frequencies: np.ndarray

    @classmethod
    def from_counts(cls, counts) -> "CountData":
        n = np.array(counts, dtype=float).ravel()
        if n.size == 0:
            raise InvalidProbability("counts are empty")
        if not np.all(np.isfinite(n)) or np.any(n < 0):
            raise InvalidProbability("counts must be finite and non-negative")
        total = float(n.sum())
        if total <= 0:
            raise InvalidProbability("counts sum to zero")
        f = n / total
        n.flags.writeable = False
        f.flags.writeable = False
        return cls(counts=n, total=total, frequencies=f)

    @classmethod
    def from_frequencies(cls, frequencies, total: float = 1.0) -> "CountData":
        """Noiseless data: frequencies taken as exact, scaled to a nominal total."""
        f = np.array(frequencies, dtype=float).ravel()
        if np.any(f < -TOL.probability_atol):
            raise InvalidProbability("frequencies must be non-negative")
        f = np.clip(f, 0.0, None)
        return cls.from_counts(f / f.sum() * total)

    def __len__(self):
        return len(self.counts)


@dataclass(frozen=True)
class Probabilities:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def as_frequencies(f) -> np.ndarray:
    return f.frequencies if isinstance(f, CountData) else np.asarray(f, dtype=float)


def _probs(p) -> np.ndarray:
    return p.values if isinstance(p, Probabilities) else np.asarray(p, dtype=float)


def _check_lengths(f: np.ndarray, p: np.ndarray):
    if len(f) != len(p):
        raise DimensionMismatch(f"{len(f)} frequencies vs {len(p)} probabilities")


def _check_pom(rho: HermitianOperator, pom: Pom):
    if rho.dim != pom.dim:
        raise DimensionMismatch(f"state dimension {rho.dim} vs POM dimension {pom.dim}")


# -------------------------------------------------------
# Array-level kernels (shared with the iteration loop)
# -------------------------------------------------------
def born_array(rho: np.ndarray, effects: np.ndarray) -> np.ndarray:
    return np.einsum("ab,jba->j", rho, effects).real


def loglik_array(f: np.ndarray, p: np.ndarray) -> float:
    mask = f > 0
    if np.any(p[mask] <= 0):
        return -np.inf
    return float(np.sum(f[mask] * np.log(p[mask])))


def entropy_from_eigenvalues(w: np.ndarray) -> float:
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def r_array(f: np.ndarray, p: np.ndarray, effects: np.ndarray) -> np.ndarray:
    mask = f > 0
    return np.einsum("j,jab->ab", f[mask] / p[mask], effects[mask])


def t_array(
    R: np.ndarray, w: np.ndarray, V: np.ndarray, lam: float, floor: float
) -> np.ndarray:
    """R - 1 - lam (log rho - tr(rho log rho)) from the eigenpairs of rho."""
    D = len(w)
    T = R - np.eye(D)
    if lam > 0:
        logw = np.log(np.maximum(w, floor))
        mean = float(np.sum(np.clip(w, 0.0, None) * logw))
        T = T - lam * ((V * (logw - mean)) @ V.conj().T)
    return T


# -------------------------------------------------------
# Public functionals
# -------------------------------------------------------
def born_probabilities(rho: DensityMatrix, pom: Pom) -> Probabilities:
    _check_pom(rho, pom)
    p = born_array(rho.matrix, pom.effect_array)
    if np.any(p < -TOL.probability_atol):
        raise InvalidProbability(f"negative Born probability {p.min():.3e}")
    p = np.clip(p, 0.0, 1.0)
    p.flags.writeable = False
    return Probabilities(values=p)


def normalized_log_likelihood(f, p) -> float:
    f, p = as_frequencies(f), _probs(p)
    _check_lengths(f, p)
    return loglik_array(f, p)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    w, _ = hermitian_eigh(rho.matrix)
    return entropy_from_eigenvalues(w)


def relative_entropy(f, p) -> float:
    f, p = as_frequencies(f), _probs(p)
    _check_lengths(f, p)
    mask = f > 0
    if np.any(p[mask] <= 0):
        return np.inf
    return float(np.sum(f[mask] * np.log(f[mask] / p[mask])))


def objective(lam: float, rho: DensityMatrix, f, pom: Pom) -> float:
    if lam < 0:
        raise InvalidConfig(f"lambda must be non-negative, got {lam}")
    p = born_probabilities(rho, pom)
    loglik = normalized_log_likelihood(f, p)
    if lam == 0:
        return loglik
    return lam * von_neumann_entropy(rho) + loglik


def _checked_probabilities(rho: DensityMatrix, f: np.ndarray, pom: Pom) -> np.ndarray:
    p = born_probabilities(rho, pom).values
    _check_lengths(f, p)
    for j in np.flatnonzero(f > 0):
        if p[j] < TOL.zero_probability:
            raise ZeroProbabilityOutcome(int(j), float(f[j]), float(p[j]))
    return p


def r_operator(rho: DensityMatrix, f, pom: Pom) -> HermitianOperator:
    f = as_frequencies(f)
    p = _checked_probabilities(rho, f, pom)
    return HermitianOperator(r_array(f, p, pom.effect_array))


def t_operator(rho: DensityMatrix, f, pom: Pom, lam: float) -> HermitianOperator:
    if lam < 0:
        raise InvalidConfig(f"lambda must be non-negative, got {lam}")
    f = as_frequencies(f)
    p = _checked_probabilities(rho, f, pom)
    w, V = hermitian_eigh(rho.matrix)
    R = r_array(f, p, pom.effect_array)
    return HermitianOperator(t_array(R, w, V, lam, TOL.log_floor))


# -------------------------------------------------------
# Phase-space and qubit diagnostics
# -------------------------------------------------------
def parity_operator(dim: int) -> HermitianOperator:
    if dim < 1:
        raise DimensionMismatch(f"dimension must be positive, got {dim}")
    return HermitianOperator(np.diag((-1.0) ** np.arange(dim)))


def wigner_origin(rho: DensityMatrix) -> float:
    return 2.0 * rho.expectation(parity_operator(rho.dim))


def bloch_vector(rho: DensityMatrix) -> Tuple[float, float, float]:
    if rho.dim != 2:
        raise DimensionMismatch(f"Bloch vector needs a qubit, got dimension {rho.dim}")
    return tuple(rho.expectation(s) for s in (PAULI_X, PAULI_Y, PAULI_Z))
