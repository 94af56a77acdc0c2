import numpy as np
import pytest

import config
from linalg_core import DensityMatrix
from pom import pauli_pom, trine_pom


@pytest.fixture(autouse=True)
def quiet_logs(monkeypatch):
    monkeypatch.setattr(config, "LOG_LEVEL", "WARN")


@pytest.fixture
def trine():
    return trine_pom()


@pytest.fixture
def pauli():
    return pauli_pom()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_hermitian(rng):
    def make(dim, traceless=False):
        G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        H = 0.5 * (G + G.conj().T)
        if traceless:
            H -= np.trace(H).real / dim * np.eye(dim)
        return H / np.linalg.norm(H)
    return make


@pytest.fixture
def full_rank_state(rng):
    """Hilbert-Schmidt draw mixed with the identity, eigenvalues >= 0.3/dim."""
    def make(dim, mix=0.3):
        G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        rho = G @ G.conj().T
        rho /= np.trace(rho).real
        return DensityMatrix((1 - mix) * rho + mix * np.eye(dim) / dim)
    return make
