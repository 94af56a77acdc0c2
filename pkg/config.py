# config.py
from dataclasses import dataclass
from math import pi
from pathlib import Path

ROOT = Path(__file__).parent.resolve()

OUTPUT_DIR = ROOT / "output"
REPORT_DIR = OUTPUT_DIR / "reports"
LOG_DIR = OUTPUT_DIR / "logs"

# Behavior toggles
LOG_LEVEL = "INFO"      # "DEBUG" shows per-iteration progress
LOG_EVERY = 1000        # accepted steps between DEBUG progress lines
SHOW_PROGRESS = False   # tqdm bars over sweep trials


@dataclass(frozen=True)
class Tolerances:
    """Every numerical tolerance used across the package."""

    hermitian_atol: float = 1e-12        # HermitianOperator symmetry invariant
    non_hermitian: float = 1e-8          # spectral_decompose rejects beyond this
    trace_atol: float = 1e-10            # DensityMatrix unit trace
    positivity_atol: float = 1e-10       # DensityMatrix / effect smallest eigenvalue
    iterate_min_eig: float = -1e-12      # every accepted iterate
    pom_closure_atol: float = 1e-8       # Frobenius norm of sum(effects) - 1
    reconstruction_atol: float = 1e-10   # basis / decomposition round trips
    log_floor: float = 1e-12             # eigenvalue clamp before log
    probability_atol: float = 1e-12      # Born probabilities below -atol are an error
    zero_probability: float = 1e-14      # r_operator boundary detection
    deficit_atol: float = 1e-8           # projected POM gains a deficit outcome above this
    quad_epsabs: float = 1e-10           # binned homodyne integrals


TOL = Tolerances()

# MLME iteration defaults
DEFAULT_LAMBDA = 1e-4
DEFAULT_EPSILON = 0.1
EPSILON_MAX = 0.5
EPSILON_MIN = 1e-14
DEFAULT_MAX_ITERS = 50000
RESIDUAL_TOL = 1e-8
OBJECTIVE_TOL = 1e-12
STALL_WINDOW = 10
GROW_AFTER = 5          # consecutive accepted steps before the step size doubles
ACCEPT_ULPS = 64        # round-off slack when comparing objective values

# Standard maximum-entropy solver defaults
ME_MAX_ITERS = 10000
ME_TOL = 1e-10
ME_MU_BOUND = 1e3

# Homodyne defaults: four phases, five quadrature values per phase
DEFAULT_THETAS = tuple(k * pi / 4 for k in range(4))
DEFAULT_XS = (-1.5, -0.5, 0.5, 1.5, 2.5)
DEFAULT_POM_MODE = "scaled-complement"
POM_MODES = ("scaled-complement", "binned")

# Simulation defaults
DEFAULT_COPIES = 10_000
DEFAULT_TRIALS = 50
DEFAULT_LAMBDA_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0)
