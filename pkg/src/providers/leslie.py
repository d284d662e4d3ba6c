"""
Leslie age-structured population models.

F has the fecundities nu on its first row and the survival rates kappa on the
subdiagonal. The input matrix is the identity: every age class can be
harvested or restocked directly.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import ValidationError
from src.models.schemas import (
    CostSpec,
    LeslieParams,
    LeslieSampling,
    LtiSystem,
    ScenarioSet,
    UncertaintySpec,
)

logger = logging.getLogger(__name__)

NOMINAL_FECUNDITY = (1.11, 2.05, 1.79, 2.37, 1.10)
NOMINAL_SURVIVAL = (0.97, 0.86, 0.37, 0.09)
SURVIVAL_PERTURBATION = 0.4
HORIZON = 8
INITIAL_POPULATION = 5.0
INPUT_WEIGHT = 5.0


def leslie_matrix(params: LeslieParams) -> np.ndarray:
    n = params.n
    F = np.zeros((n, n))
    F[0, :] = params.nu
    for i, k in enumerate(params.kappa):
        F[i + 1, i] = k
    return F


def initial_state(n: int) -> np.ndarray:
    """All of the initial population in the youngest class."""
    x0 = np.zeros(n)
    x0[0] = INITIAL_POPULATION
    return x0


def leslie_system(params: LeslieParams, x0: Optional[Sequence[float]] = None) -> LtiSystem:
    n = params.n
    return LtiSystem(
        F=leslie_matrix(params),
        G=np.eye(n),
        x0=initial_state(n) if x0 is None else x0,
    )


def leslie_cost(n: int, T: int = HORIZON) -> CostSpec:
    """Q = diag(n, ..., 1), R = 5 I and S = Q."""
    Q = np.diag(np.arange(n, 0, -1, dtype=float))
    return CostSpec(Q=Q, R=INPUT_WEIGHT * np.eye(n), S=Q, T=T)


def sample_random_leslie(
    rng: np.random.Generator,
    n: int = 5,
    nu_range: Tuple[float, float] = (0.0, 4.0),
    kappa_range: Tuple[float, float] = (0.0, 1.0),
) -> LeslieParams:
    """I.i.d. uniform fecundities and survival rates."""
    if nu_range[0] > nu_range[1] or kappa_range[0] > kappa_range[1]:
        raise ValidationError("sampling ranges must have lower <= upper")
    nu = rng.uniform(nu_range[0], nu_range[1], size=n)
    kappa = rng.uniform(kappa_range[0], kappa_range[1], size=n - 1)
    return LeslieParams(nu=nu.tolist(), kappa=kappa.tolist())


def sample_from_config(rng: np.random.Generator, sampling: LeslieSampling) -> LeslieParams:
    return sample_random_leslie(rng, sampling.n, sampling.nu_range, sampling.kappa_range)


def nominal_scenario_params() -> LeslieParams:
    return LeslieParams(nu=list(NOMINAL_FECUNDITY), kappa=list(NOMINAL_SURVIVAL))


def nominal_uncertainty(count: int = len(NOMINAL_SURVIVAL)) -> UncertaintySpec:
    return UncertaintySpec.symmetric(SURVIVAL_PERTURBATION, count)


def sample_scenarios(
    nominal: LeslieParams,
    spec: UncertaintySpec,
    N: int,
    rng: np.random.Generator,
    x0: Optional[Sequence[float]] = None,
) -> ScenarioSet:
    """
    N Leslie matrices with kappa_i + delta_i, delta_i ~ U[lower_i, upper_i], nu fixed.

    Perturbed survival rates are passed through unclamped; those leaving (0, 1)
    are counted in the metadata and logged.
    """
    if N < 1:
        raise ValidationError("need at least one scenario")
    if len(spec.lower) != len(nominal.kappa):
        raise ValidationError(
            f"uncertainty has {len(spec.lower)} entries, model has {len(nominal.kappa)} survival rates"
        )
    lower, upper = np.asarray(spec.lower), np.asarray(spec.upper)
    deltas = rng.uniform(lower, upper, size=(N, lower.size))
    kappas = np.asarray(nominal.kappa) + deltas

    out_of_range = int(np.count_nonzero((kappas <= 0.0) | (kappas >= 1.0)))
    if out_of_range:
        logger.warning(
            "perturbed survival rates outside (0, 1)",
            extra={"scenario_count": N, "out_of_range": out_of_range},
        )

    F = np.stack(
        [
            leslie_matrix(LeslieParams(nu=nominal.nu, kappa=k.tolist(), check_survival_range=False))
            for k in kappas
        ]
    )
    n = nominal.n
    return ScenarioSet(
        F=F,
        G=np.eye(n),
        x0=initial_state(n) if x0 is None else x0,
        metadata={
            "generator": "philox",
            "delta_lower": list(spec.lower),
            "delta_upper": list(spec.upper),
            "out_of_range_survival": out_of_range,
        },
    )
