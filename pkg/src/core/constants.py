from enum import Enum


class Method(str, Enum):
    S0 = "s0"
    S1 = "s1"
    S2 = "s2"
    SINF = "sinf"
    CLASSIC = "classic"


class ExperimentKind(str, Enum):
    MONTECARLO = "montecarlo"
    NONDETECTABLE = "nondetectable"
    SCENARIO = "scenario"
    SINGLE = "single-solve"


LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class TrialStatus(str, Enum):
    OK = "ok"
    NOT_DETECTABLE = "not_detectable"
    FAILED = "failed"


SYMMETRY_TOL = 1e-9
"""Relative symmetry tolerance, scaled by the Frobenius norm of the input"""

SINGULARITY_TOL = 1e-12
"""A pivot below this fraction of the largest entry marks the matrix singular"""

PSD_TOL = 1e-12
"""Absolute slack on the smallest eigenvalue when testing definiteness"""

R_DEFINITENESS_SHIFT = 1e-12
"""Shift used to check R is strictly positive definite"""

DEFAULT_XI = 1e-5
"""Strictness shift of the Lyapunov LMI"""

DEFAULT_MU = 0.01
"""Penalty weight coupling K, C and D in the alternating scheme"""

BARRIER_MU_START = 1.0
BARRIER_MU_END = 1e-8
BARRIER_MU_FACTOR = 0.2
"""Barrier parameter schedule for the LMI subproblem: geometric decrease from start to end"""

BARRIER_NEWTON_MAX_ITER = 50
BARRIER_NEWTON_TOL = 1e-10
"""Newton decrement threshold (lambda^2 / 2) for a barrier stage"""

BARRIER_BALL_RADIUS = 1e4
"""Radius of the bounding ball that keeps the barrier subproblem compact"""

ARMIJO_C = 0.25
BACKTRACK_FACTOR = 0.5

DETECTABILITY_MARGIN = 1e-10
"""Eigenvalues with modulus >= 1 - margin are tested by PBH"""

PBH_RANK_TOL = 1e-8

RICCATI_TOL = 1e-10
"""Relative stopping tolerance of the DRE fixed-point iteration"""

RICCATI_MAX_ITER = 100_000

HEWER_STEPS = 3
"""Newton-Hewer refinement steps applied after the fixed-point iteration"""

UNCHANGED_TOL = 1e-6
"""Relative distance under which two scenario solutions count as the same"""

SUPPORT_VALUE_TOL = 1e-4
"""Relative rise of the full-sample worst case at which a re-solve counts as changed"""

NM_INITIAL_STEP = 0.1
NM_MAX_EVAL_FACTOR = 200
"""Nelder-Mead evaluation budget is this factor times n^2, the entries of L"""

NM_RESTARTS = 0

LBFGS_MEMORY = 10
LBFGS_MAX_ITER = 500

S0_MAX_OUTER = 25
S0_TOL = 1e-6

INIT_SCALE = 0.1
"""Standard deviation of random initial points"""

EPIGRAPH_KKT_TOL = 1e-7

STABILITY_EPS = 1e-12
"""rho(F + GK) < 1 - STABILITY_EPS counts as stabilizing"""

CSV_COLUMNS = (
    "trial",
    "method",
    "rho_open",
    "rho_closed",
    "J",
    "J_star",
    "rel_gap",
    "time_ms",
    "converged",
    "epsilon_posterior",
)
