"""
linalg_core.py
--------------
Dense Hermitian linear algebra used by every other stage:
operator carriers, spectral decomposition, matrix functions on the
support, distances and Fock-space embedding helpers.

All values are immutable once built (the underlying arrays are
flagged read-only), so they can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.linalg import eigh, eigvalsh
from scipy.special import logsumexp

from config import TOL
from errors import DimensionMismatch, InvalidState, NonHermitianInput


# -------------------------------------------------------
# Operator carriers
# -------------------------------------------------------
class HermitianOperator:
    """D x D complex Hermitian matrix. Symmetrized on construction."""

    __slots__ = ("_m",)

    def __init__(self, matrix, atol: float | None = None):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonHermitianInput("matrix has non-finite entries")
        atol = TOL.non_hermitian if atol is None else atol
        skew = float(np.max(np.abs(m - m.conj().T)))
        if skew > atol:
            raise NonHermitianInput(f"max |H - H^dagger| = {skew:.3e} exceeds {atol:.0e}")
        m = 0.5 * (m + m.conj().T)
        m.flags.writeable = False
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def trace(self) -> float:
        return float(np.trace(self._m).real)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self._m))

    def expectation(self, other: "HermitianOperator") -> float:
        """tr(self · other), real for two Hermitian operators."""
        _check_same_dim(self, other)
        return float(np.einsum("ab,ba->", self._m, other.matrix).real)

    def __add__(self, other):
        _check_same_dim(self, other)
        return HermitianOperator(self._m + other.matrix)

    def __sub__(self, other):
        _check_same_dim(self, other)
        return HermitianOperator(self._m - other.matrix)

    def __mul__(self, scalar: float):
        return HermitianOperator(float(scalar) * self._m)

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class DensityMatrix(HermitianOperator):
    """Positive semidefinite, unit-trace HermitianOperator."""

    __slots__ = ()

    def __init__(self, matrix, atol: float | None = None):
        super().__init__(matrix, atol)
        tr = self.trace()
        if abs(tr - 1.0) > TOL.trace_atol:
            raise InvalidState(f"trace {tr:.12g} differs from 1")
        w_min = float(eigvalsh(self._m)[0])
        if w_min < -TOL.positivity_atol:
            raise InvalidState(f"smallest eigenvalue {w_min:.3e} is negative")

    @classmethod
    def from_unnormalized(cls, matrix) -> "DensityMatrix":
        m = np.asarray(matrix, dtype=complex)
        tr = float(np.trace(m).real)
        if not tr > 0:
            raise InvalidState(f"cannot normalize an operator with trace {tr:.3e}")
        return cls(m / tr)

    @property
    def op(self) -> HermitianOperator:
        return HermitianOperator(self._m)


def _check_same_dim(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")


def identity(dim: int) -> HermitianOperator:
    return HermitianOperator(np.eye(dim))


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim)


def basis_state(dim: int, n: int) -> DensityMatrix:
    """Projector |n><n| in a dim-dimensional space."""
    if not 0 <= n < dim:
        raise DimensionMismatch(f"level {n} outside dimension {dim}")
    m = np.zeros((dim, dim), dtype=complex)
    m[n, n] = 1.0
    return DensityMatrix(m)


def pure_state(vector) -> DensityMatrix:
    v = np.asarray(vector, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()))


PAULI_X = HermitianOperator([[0, 1], [1, 0]])
PAULI_Y = HermitianOperator([[0, -1j], [1j, 0]])
PAULI_Z = HermitianOperator([[1, 0], [0, -1]])


# -------------------------------------------------------
# Spectral decomposition
# -------------------------------------------------------
@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray      # descending
    eigenvectors: np.ndarray     # columns, orthonormal

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def fix_phases(V: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Rotate each column so its first significant component is real-positive."""
    V = np.array(V, dtype=complex)
    for k in range(V.shape[1]):
        col = V[:, k]
        big = np.abs(col) > rel_tol * np.max(np.abs(col))
        i = int(np.argmax(big))
        V[:, k] = col * (np.conj(col[i]) / abs(col[i]))
    return V


def hermitian_eigh(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a Hermitian array, eigenvalues descending."""
    w, V = eigh(matrix)
    return w[::-1], V[:, ::-1]


def _as_operator(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


def spectral_decompose(H) -> Spectrum:
    H = _as_operator(H)
    w, V = hermitian_eigh(H.matrix)
    V = fix_phases(V)
    w.flags.writeable = False
    V.flags.writeable = False
    return Spectrum(eigenvalues=w, eigenvectors=V)


def matrix_function(H, fn: Callable[[np.ndarray], np.ndarray]) -> HermitianOperator:
    """fn applied to the eigenvalues of H; fn must map reals to reals."""
    H = _as_operator(H)
    w, V = hermitian_eigh(H.matrix)
    return HermitianOperator((V * fn(w)) @ V.conj().T)


def matrix_log_on_support(rho: DensityMatrix, floor: float | None = None) -> HermitianOperator:
    floor = TOL.log_floor if floor is None else floor
    return matrix_function(rho, lambda w: np.log(np.maximum(w, floor)))


def gibbs_state(H) -> DensityMatrix:
    """exp(H)/tr exp(H), evaluated stably for large eigenvalues."""
    H = _as_operator(H)
    w, V = hermitian_eigh(H.matrix)
    weights = np.exp(w - logsumexp(w))
    return DensityMatrix((V * weights) @ V.conj().T)


# -------------------------------------------------------
# Distances and subspaces
# -------------------------------------------------------
def trace_distance(rho: HermitianOperator, sigma: HermitianOperator) -> float:
    _check_same_dim(rho, sigma)
    w = eigvalsh(rho.matrix - sigma.matrix)
    return float(min(1.0, 0.5 * np.sum(np.abs(w))))


def embed(rho: DensityMatrix, dim: int) -> DensityMatrix:
    """Zero-pad rho into the first rho.dim levels of a dim-dimensional space."""
    if dim < rho.dim:
        raise DimensionMismatch(f"cannot embed dimension {rho.dim} into {dim}")
    m = np.zeros((dim, dim), dtype=complex)
    m[: rho.dim, : rho.dim] = rho.matrix
    return DensityMatrix(m)


def truncate(rho: DensityMatrix, dim: int) -> DensityMatrix:
    """Normalized compression of rho onto its first dim levels."""
    if not 1 <= dim <= rho.dim:
        raise DimensionMismatch(f"cannot truncate dimension {rho.dim} to {dim}")
    return DensityMatrix.from_unnormalized(rho.matrix[:dim, :dim])
