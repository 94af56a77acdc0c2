"""
End-to-end acceptance checks: trine reproduction, standard-ME
infeasibility, lambda-sweep trends, the homodyne completeness boundary,
oracle equivalence, decomposition invariants, the objective gradient,
iteration safety and the parity oracle.
"""
import numpy as np
import pandas as pd
import pytest

from functionals import (
    CountData,
    bloch_vector,
    born_probabilities,
    objective,
    parity_operator,
    t_operator,
    wigner_origin,
)
from formats import SWEEP_COLUMNS, write_sweep_csv
from linalg_core import DensityMatrix, basis_state, trace_distance
from pom import (
    build_operator_basis,
    decompose_state,
    gram_analysis,
    homodyne_pom,
    parity_via_quadrature,
    project_pom,
)
from reconstruct import (
    Infeasible,
    IterationConfig,
    linear_inversion,
    mlme_reconstruct,
    standard_me_solve,
)
from simulate import ExperimentConfig, dimension_sweep, lambda_sweep, random_density

TRINE_COUNTS = [6, 2, 1]
LAMBDA_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0)


def _assert_iteration_safe(result):
    assert result.min_eigenvalue >= -1e-12
    assert abs(result.estimator.trace() - 1.0) <= 1e-10
    assert np.all(np.diff(result.objective_trace) >= -1e-12)
    if result.converged:
        assert result.residual <= 1e-8


def test_trine_reproduction(trine):
    result = mlme_reconstruct(CountData.from_counts(TRINE_COUNTS), trine, IterationConfig(lam=1e-4))
    assert result.converged
    x, y, z = bloch_vector(result.estimator)
    assert x == pytest.approx(0.194, abs=0.005)
    assert y == pytest.approx(0.0, abs=0.005)
    assert z == pytest.approx(0.981, abs=0.005)
    _assert_iteration_safe(result)


def test_standard_me_infeasible(trine):
    f = np.array(TRINE_COUNTS) / 9
    # p_j = (1 + r.n_j) / 3 fixes r_z = 1 and r_x = 1/(3 sqrt 3): outside the Bloch ball
    r_z = 3 * f[0] - 1
    r_x = (3 * f[1] - 1 + r_z / 2) / (np.sqrt(3) / 2)
    assert r_x ** 2 + r_z ** 2 == pytest.approx(1 + 1 / 27)
    assert isinstance(standard_me_solve(f, trine), Infeasible)


@pytest.mark.slow
def test_lambda_sweep_trends_five_levels():
    cfg = ExperimentConfig(dim_true=5, seed=2024, copies=10 ** 4, trials=1, lambdas=LAMBDA_GRID)
    records = lambda_sweep(cfg)
    assert [r.key for r in records] == list(LAMBDA_GRID)
    conv = [r.converged_fraction == 1.0 for r in records]
    # small lambda converges slowly along unmeasured directions
    assert all(c for r, c in zip(records, conv) if r.key >= 1e-3)
    for a, b, ca, cb in zip(records, records[1:], conv, conv[1:]):
        if ca and cb:
            assert b.mean_entropy >= a.mean_entropy - 1e-9
            assert b.mean_log_likelihood <= a.mean_log_likelihood + 1e-9
    assert records[-1].mean_entropy == pytest.approx(np.log(5), abs=0.02)


def test_homodyne_completeness_boundary():
    full = homodyne_pom(dim=8)
    assert len(full) == 21
    for d in range(2, 9):
        rank = gram_analysis(project_pom(full, d)).informational_rank
        if d <= 4:
            assert rank == d * d
        else:
            assert rank < d * d


@pytest.mark.slow
def test_dimension_sweep_eight_levels(tmp_path):
    cfg = ExperimentConfig(dim_true=8, seed=8, copies=10 ** 4, trials=1, max_iters=2000)
    records = dimension_sweep(cfg)
    assert [r.key for r in records] == list(range(2, 9))
    assert all(r.failures == 0 for r in records)
    assert all(r.truncation_distance > 0 for r in records if r.key < 8)
    assert records[-1].truncation_distance == pytest.approx(0.0, abs=1e-12)
    path = tmp_path / "dims.csv"
    write_sweep_csv(records, path)
    df = pd.read_csv(path)
    assert list(df.columns[: len(SWEEP_COLUMNS)]) == SWEEP_COLUMNS
    assert len(df) == 7
    assert df[["mean_entropy", "mean_trace_distance", "mean_w00"]].notna().all().all()


def test_oracle_equivalence_complete_qubit(pauli):
    for seed in range(20):
        rho = random_density(2, seed)
        f = born_probabilities(rho, pauli).values
        result = mlme_reconstruct(f, pauli, IterationConfig(lam=1e-6))
        oracle = linear_inversion(f, pauli)
        assert trace_distance(result.estimator, DensityMatrix(oracle.matrix)) < 1e-4
        _assert_iteration_safe(result)


def test_decomposition_invariants(trine, rng):
    basis = build_operator_basis(trine)
    gammas = np.array([g.matrix for g in basis.measurement])
    effects = np.einsum("jk,kab->jab", basis.expansion, gammas)
    assert np.max(np.abs(effects - trine.effect_array)) <= 1e-10
    assert basis.expansion.dtype.kind == "f"
    for _ in range(50):
        rho = random_density(2, rng)
        parts = decompose_state(rho, basis)
        for E in trine.effects:
            assert abs(parts.me_part.expectation(E)) <= 1e-10
        assert np.linalg.norm(parts.ml_part.matrix + parts.me_part.matrix - rho.matrix) <= 1e-10


@pytest.mark.parametrize("which", ["trine", "homodyne"])
def test_objective_gradient(which, trine, rng, full_rank_state, random_hermitian):
    pom = trine if which == "trine" else homodyne_pom(dim=3)
    D, t = pom.dim, 1e-6
    for k in range(20):
        lam = (0.0, 0.1, 1.0)[k % 3]
        rho = full_rank_state(D)
        f = born_probabilities(full_rank_state(D), pom).values
        delta = random_hermitian(D, traceless=True)
        plus = DensityMatrix(rho.matrix + t * delta)
        minus = DensityMatrix(rho.matrix - t * delta)
        numeric = (objective(lam, plus, f, pom) - objective(lam, minus, f, pom)) / (2 * t)
        analytic = float(np.trace(delta @ t_operator(rho, f, pom, lam).matrix).real)
        assert numeric == pytest.approx(analytic, rel=1e-5, abs=1e-7)


def test_iteration_safety_across_regimes(trine, pauli):
    runs = [
        mlme_reconstruct(CountData.from_counts(TRINE_COUNTS), trine, IterationConfig(lam=lam))
        for lam in (1e-4, 1e-2, 1.0)
    ]
    runs.append(mlme_reconstruct([0.5, 0.3, 0.2], trine, IterationConfig(lam=0.0)))
    rho = random_density(2, 99)
    runs.append(mlme_reconstruct(born_probabilities(rho, pauli).values, pauli, IterationConfig(lam=1e-3)))
    for result in runs:
        _assert_iteration_safe(result)


def test_parity_oracle_and_wigner_origin():
    P = parity_operator(6).matrix.real
    assert np.max(np.abs(P - parity_via_quadrature(6))) <= 1e-8
    assert wigner_origin(basis_state(6, 0)) == pytest.approx(2.0, abs=1e-12)
    assert wigner_origin(basis_state(6, 1)) == pytest.approx(-2.0, abs=1e-12)
