"""
pom.py
------
Probability-operator measurements (POMs): construction of the trine,
Pauli and homodyne-in-Fock-space measurements, informational-completeness
analysis through the Gram matrix, and the measurement / complement split
of operator space.

Behaviour:
- Every Pom is validated on construction (effect positivity, closure).
- Homodyne POMs come in two completion modes: "scaled-complement"
  (uniformly scaled projectors plus one complement outcome) and
  "binned" (quadrature bins integrated over the real line).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import pi, sqrt
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh, eigvalsh, null_space

from config import DEFAULT_POM_MODE, DEFAULT_THETAS, DEFAULT_XS, POM_MODES, TOL
from errors import (
    DimensionMismatch,
    InvalidConfig,
    InvalidPom,
    InvalidSettings,
    RankDeficiencyMismatch,
)
from linalg_core import PAULI_X, PAULI_Y, PAULI_Z, DensityMatrix, HermitianOperator
from utils import log_step


# -------------------------------------------------------
# Pom carrier
# -------------------------------------------------------
class Pom:
    """Ordered list of K effects summing to the identity."""

    def __init__(self, effects: Iterable, labels: Sequence[str] | None = None):
        ops = [e if isinstance(e, HermitianOperator) else HermitianOperator(e) for e in effects]
        if not ops:
            raise InvalidPom("a POM needs at least one effect")
        dim = ops[0].dim
        if any(op.dim != dim for op in ops):
            raise InvalidPom("effects have different dimensions")
        labels = [str(i) for i in range(len(ops))] if labels is None else [str(x) for x in labels]
        if len(labels) != len(ops):
            raise InvalidPom(f"{len(labels)} labels for {len(ops)} effects")

        for j, op in enumerate(ops):
            w_min = float(eigvalsh(op.matrix)[0])
            if w_min < -TOL.positivity_atol:
                raise InvalidPom(f"effect {labels[j]!r} has eigenvalue {w_min:.3e}")

        arr = np.array([op.matrix for op in ops])
        closure = float(np.linalg.norm(arr.sum(axis=0) - np.eye(dim)))
        if closure > TOL.pom_closure_atol:
            raise InvalidPom(f"effects do not sum to identity (residual {closure:.3e})")
        arr.flags.writeable = False

        self.dim = dim
        self.effects: Tuple[HermitianOperator, ...] = tuple(ops)
        self.labels: Tuple[str, ...] = tuple(labels)
        self.effect_array = arr
        self.closure_residual = closure

    def __len__(self):
        return len(self.effects)

    def __repr__(self):
        return f"Pom(dim={self.dim}, K={len(self)})"


def trine_pom() -> Pom:
    I2 = np.eye(2)
    X, Z = PAULI_X.matrix, PAULI_Z.matrix
    h = sqrt(3) / 2
    effects = [
        (I2 + Z) / 3,
        (I2 + h * X - Z / 2) / 3,
        (I2 - h * X - Z / 2) / 3,
    ]
    return Pom(effects, labels=["0", "+", "-"])


def pauli_pom() -> Pom:
    """Six Pauli-eigenstate projectors, each weighted 1/3."""
    I2 = np.eye(2)
    effects, labels = [], []
    for name, s in (("x", PAULI_X), ("y", PAULI_Y), ("z", PAULI_Z)):
        for sign in (+1, -1):
            effects.append((I2 + sign * s.matrix) / 6)
            labels.append(f"{'+' if sign > 0 else '-'}{name}")
    return Pom(effects, labels=labels)


def single_outcome_pom(dim: int) -> Pom:
    return Pom([np.eye(dim)], labels=["1"])


NAMED_POMS = {"trine": trine_pom, "pauli": pauli_pom}


def named_pom(kind: str) -> Pom:
    try:
        return NAMED_POMS[kind]()
    except KeyError:
        raise InvalidPom(f"unknown POM kind {kind!r}; expected one of {sorted(NAMED_POMS)}")


# -------------------------------------------------------
# Homodyne measurement in a truncated Fock space
# -------------------------------------------------------
@dataclass(frozen=True)
class QuadratureSetting:
    theta: float
    xs: Tuple[float, ...]

    def __post_init__(self):
        xs = tuple(float(x) for x in self.xs)
        if not xs:
            raise InvalidSettings(f"setting theta={self.theta} has no x values")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InvalidSettings(f"x values for theta={self.theta} are not strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "theta", float(self.theta))


def default_settings() -> List[QuadratureSetting]:
    return [QuadratureSetting(theta=t, xs=DEFAULT_XS) for t in DEFAULT_THETAS]


def hermite_functions(nmax: int, x) -> np.ndarray:
    """psi_0..psi_nmax at x, stacked along the first axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = pi ** -0.25 * np.exp(-0.5 * x ** 2)
    if nmax >= 1:
        out[1] = sqrt(2.0) * x * out[0]
    for n in range(1, nmax):
        out[n + 1] = sqrt(2.0 / (n + 1)) * x * out[n] - sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_function(n: int, x):
    if n < 0:
        raise ValueError(f"Hermite index must be non-negative, got {n}")
    val = hermite_functions(n, x)[n]
    return float(val) if np.ndim(val) == 0 else val


def _fock_phases(theta: float, dim: int) -> np.ndarray:
    return np.exp(1j * theta * np.arange(dim))


def quadrature_projector(theta: float, x: float, dim: int) -> HermitianOperator:
    """|x_theta><x_theta| truncated to the first dim Fock levels."""
    if dim < 1:
        raise DimensionMismatch(f"dimension must be positive, got {dim}")
    v = _fock_phases(theta, dim) * hermite_functions(dim - 1, x)
    return HermitianOperator(np.outer(v, v.conj()))


def _bin_edges(xs: Sequence[float]) -> List[Tuple[float, float]]:
    mids = [0.5 * (a + b) for a, b in zip(xs, xs[1:])]
    edges = [-np.inf] + mids + [np.inf]
    return list(zip(edges[:-1], edges[1:]))


def _psi_product(x: float, m: int, n: int, sign: float = 1.0) -> float:
    k = max(m, n)
    return hermite_functions(k, x)[m] * hermite_functions(k, sign * x)[n]


def _overlap_integrals(a: float, b: float, dim: int) -> np.ndarray:
    """J_mn = integral of psi_m psi_n over [a, b]."""
    J = np.empty((dim, dim))
    for m in range(dim):
        for n in range(m, dim):
            val, _ = quad(
                _psi_product, a, b, args=(m, n),
                epsabs=TOL.quad_epsabs, epsrel=1e-12, limit=200,
            )
            J[m, n] = J[n, m] = val
    return J


def homodyne_pom(
    settings: Sequence[QuadratureSetting] | None = None,
    dim: int = 5,
    mode: str = DEFAULT_POM_MODE,
) -> Pom:
    settings = default_settings() if settings is None else list(settings)
    if not settings:
        raise InvalidSettings("no quadrature settings given")
    if dim < 2:
        raise InvalidSettings(f"homodyne POM needs dim >= 2, got {dim}")
    if mode not in POM_MODES:
        raise InvalidSettings(f"unknown completion mode {mode!r}; expected one of {POM_MODES}")

    if mode == "scaled-complement":
        raw, labels = [], []
        for s in settings:
            for x in s.xs:
                raw.append(quadrature_projector(s.theta, x, dim).matrix)
                labels.append(f"q[{s.theta:.4f},{x:+.3f}]")
        raw = np.array(raw)
        total = raw.sum(axis=0)
        top = float(eigvalsh(total)[-1])
        if not top > np.finfo(float).tiny:
            raise InvalidSettings(
                f"quadrature projectors vanish on the first {dim} Fock levels (largest eigenvalue {top:.3e}); "
                "move the x values towards the origin"
            )
        scale = 1.0 / top
        effects = list(scale * raw)
        effects.append(np.eye(dim) - scale * total)
        labels.append("complement")
        log_step(f"Homodyne POM dim={dim}: {len(raw)} projectors scaled by {scale:.6f} + complement", "DEBUG")
        return Pom(effects, labels=labels)

    cache = {}
    effects, labels = [], []
    weight = 1.0 / len(settings)
    for s in settings:
        phase = _fock_phases(s.theta, dim)
        for x, (a, b) in zip(s.xs, _bin_edges(s.xs)):
            if (a, b) not in cache:
                cache[(a, b)] = _overlap_integrals(a, b, dim)
            effects.append(weight * np.outer(phase, phase.conj()) * cache[(a, b)])
            labels.append(f"bin[{s.theta:.4f},{x:+.3f}]")
    log_step(f"Homodyne POM dim={dim}: {len(effects)} binned effects ({len(cache)} distinct bins)", "DEBUG")
    return Pom(effects, labels=labels)


def project_effects(effects: np.ndarray, dim: int, labels: Sequence[str] | None = None) -> Pom:
    """Compress effects onto the first dim levels; a deficit outcome restores closure."""
    effects = np.asarray(effects)
    if not 1 <= dim <= effects.shape[1]:
        raise DimensionMismatch(f"cannot project dimension {effects.shape[1]} to {dim}")
    labels = [str(i) for i in range(len(effects))] if labels is None else list(labels)
    block = effects[:, :dim, :dim]
    deficit = np.eye(dim) - block.sum(axis=0)
    out = list(block)
    if np.linalg.norm(deficit) > TOL.deficit_atol:
        out.append(deficit)
        labels.append("deficit")
    return Pom(out, labels=labels)


def project_pom(pom: Pom, dim: int) -> Pom:
    return project_effects(pom.effect_array, dim, pom.labels)


def parity_via_quadrature(dim: int) -> np.ndarray:
    """Numerical oracle for the parity operator: integral of psi_m(x) psi_n(-x)."""
    P = np.empty((dim, dim))
    for m in range(dim):
        for n in range(dim):
            val, _ = quad(
                _psi_product, -np.inf, np.inf, args=(m, n, -1.0),
                epsabs=1e-12, epsrel=1e-12, limit=200,
            )
            P[m, n] = val
    return P


# -------------------------------------------------------
# Hermitian operator coordinates
# -------------------------------------------------------
@lru_cache(maxsize=None)
def hermitian_basis(dim: int) -> np.ndarray:
    """Trace-orthonormal Hermitian basis of dim x dim operators, shape (dim^2, dim, dim)."""
    B = []
    for n in range(dim):
        E = np.zeros((dim, dim), dtype=complex)
        E[n, n] = 1.0
        B.append(E)
    for m in range(dim):
        for n in range(m + 1, dim):
            S = np.zeros((dim, dim), dtype=complex)
            S[m, n] = S[n, m] = 1 / sqrt(2)
            A = np.zeros((dim, dim), dtype=complex)
            A[n, m] = 1j / sqrt(2)
            A[m, n] = -1j / sqrt(2)
            B.extend([S, A])
    B = np.array(B)
    B.flags.writeable = False
    return B


def to_coordinates(ops: np.ndarray) -> np.ndarray:
    """Real coordinates tr(B_a X) of a stack of Hermitian arrays."""
    ops = np.asarray(ops)
    B = hermitian_basis(ops.shape[-1])
    return np.einsum("kab,nba->nk", B, ops).real


def from_coordinates(coords: np.ndarray, dim: int) -> np.ndarray:
    return np.einsum("nk,kab->nab", np.asarray(coords, dtype=float), hermitian_basis(dim))


def _fix_signs(coords: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    coords = np.array(coords)
    for row in coords:
        i = int(np.argmax(np.abs(row) > rel_tol * np.max(np.abs(row))))
        if row[i] < 0:
            row *= -1
    return coords


# -------------------------------------------------------
# Gram analysis and operator basis
# -------------------------------------------------------
@dataclass(frozen=True)
class GramAnalysis:
    dim: int
    gram: np.ndarray
    eigenvalues: np.ndarray      # descending
    eigenvectors: np.ndarray
    rank_tolerance: float
    informational_rank: int

    @property
    def complete(self) -> bool:
        return self.informational_rank == self.dim ** 2


def gram_analysis(pom: Pom, tol: float | None = None) -> GramAnalysis:
    E = pom.effect_array
    K = len(pom)
    M = np.einsum("jab,kba->jk", E, E).real
    M = 0.5 * (M + M.T)
    w, U = eigh(M)
    w, U = w[::-1], U[:, ::-1]
    if tol is None:
        tol = K * np.finfo(float).eps * max(float(w[0]), 0.0)
    elif tol <= 0:
        raise InvalidConfig(f"rank tolerance must be positive, got {tol}")
    rank = int(np.sum(w > tol))
    rank = max(1, min(rank, K, pom.dim ** 2))
    return GramAnalysis(
        dim=pom.dim, gram=M, eigenvalues=w, eigenvectors=U,
        rank_tolerance=float(tol), informational_rank=rank,
    )


@dataclass(frozen=True)
class OperatorBasis:
    dim: int
    measurement: Tuple[HermitianOperator, ...]
    complement: Tuple[HermitianOperator, ...]
    expansion: np.ndarray            # K x n_>0, real
    measurement_coords: np.ndarray   # n_>0 x D^2
    complement_coords: np.ndarray    # (D^2 - n_>0) x D^2


def build_operator_basis(pom: Pom, analysis: GramAnalysis | None = None) -> OperatorBasis:
    analysis = gram_analysis(pom) if analysis is None else analysis
    E = pom.effect_array
    K, D = len(pom), pom.dim
    if analysis.gram.shape != (K, K) or analysis.dim != D:
        raise DimensionMismatch("Gram analysis was computed for a different POM")
    r = analysis.informational_rank

    A = to_coordinates(E)
    s = np.linalg.svd(A, compute_uv=False)
    svd_tol = max(D * D, K) * np.finfo(float).eps * s[0]
    svd_rank = min(int(np.sum(s > svd_tol)), D * D)
    if svd_rank != r:
        raise RankDeficiencyMismatch(
            f"Gram analysis reports rank {r} but the effects span {svd_rank} dimensions "
            f"(rank tolerance {analysis.rank_tolerance:.3e})"
        )

    U = analysis.eigenvectors[:, :r]
    m = analysis.eigenvalues[:r]
    G = (U.T @ A) / np.sqrt(m)[:, None]
    G = _fix_signs(G)
    C = _fix_signs(null_space(G).T) if r < D * D else np.zeros((0, D * D))

    gamma = from_coordinates(G, D)
    comp = from_coordinates(C, D)
    expansion = A @ G.T
    for arr in (G, C, expansion):
        arr.flags.writeable = False
    return OperatorBasis(
        dim=D,
        measurement=tuple(HermitianOperator(g) for g in gamma),
        complement=tuple(HermitianOperator(c) for c in comp),
        expansion=expansion,
        measurement_coords=G,
        complement_coords=C,
    )


@dataclass(frozen=True)
class StateDecomposition:
    ml_coeffs: np.ndarray
    me_coeffs: np.ndarray
    ml_part: HermitianOperator
    me_part: HermitianOperator


def decompose_state(rho: DensityMatrix, basis: OperatorBasis) -> StateDecomposition:
    if rho.dim != basis.dim:
        raise DimensionMismatch(f"state dimension {rho.dim} vs basis dimension {basis.dim}")
    c = to_coordinates(rho.matrix[None])[0]
    ml = basis.measurement_coords @ c
    me = basis.complement_coords @ c
    ml_part = from_coordinates((ml @ basis.measurement_coords)[None], basis.dim)[0]
    me_part = from_coordinates((me @ basis.complement_coords)[None], basis.dim)[0]
    return StateDecomposition(
        ml_coeffs=ml, me_coeffs=me,
        ml_part=HermitianOperator(ml_part), me_part=HermitianOperator(me_part),
    )
