"""
S1 and S2: constant feedback tied to a square factor L through
K(L) = -(R + G'L'LG)^-1 G'L'L F, searched with Nelder-Mead over the n^2 entries of L.

S1 minimizes the closed-loop finite-horizon cost of K(L). S2 minimizes
|L x0|^2 + z'(S - L'L)z with z = (F + GK)^T x0, which L'L = S reduces to x0'S x0.
Both accept a stack of state matrices and then minimize the worst case.
"""

import logging
import time
from typing import Callable, FrozenSet, NamedTuple, Optional, Set

import numpy as np
from scipy.optimize import minimize

from src.core.constants import STABILITY_EPS, Method
from src.core.exceptions import SingularMatrixError, ValidationError
from src.models.schemas import CostSpec, LtiSystem, NelderMeadConfig, StabilizedSolution
from src.solvers.riccati import feedback_from_L
from src.utils.matrix_kernel import spectral_radius

logger = logging.getLogger(__name__)

ValuesFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, CostSpec], np.ndarray]


class NelderMeadResult(NamedTuple):
    x: np.ndarray
    fun: float
    evaluations: int
    converged: bool


class AreFeedbackRun(NamedTuple):
    solution: StabilizedSolution
    influential: FrozenSet[int]
    """Scenarios that were ever the unique strict maximizer during the search"""


def closed_loop_costs(K: np.ndarray, F: np.ndarray, G: np.ndarray, x0: np.ndarray, cost: CostSpec):
    """Per-scenario cost of u_t = K_i x_t; K is (N, m, n) against F (N, n, n)."""
    F_K = F + np.einsum("ij,njk->nik", G, K)
    Q_K = cost.Q[None, :, :] + np.einsum("nji,jk,nkl->nil", K, cost.R, K)
    N = F.shape[0]
    x = np.broadcast_to(x0, (N, x0.shape[0])).copy()
    total = np.zeros(N)
    for _ in range(cost.T):
        total += np.einsum("ni,nij,nj->n", x, Q_K, x)
        x = np.einsum("nij,nj->ni", F_K, x)
    total += np.einsum("ni,ij,nj->n", x, cost.S, x)
    return total, F_K


def s1_values(L: np.ndarray, F: np.ndarray, G: np.ndarray, x0: np.ndarray, cost: CostSpec):
    K = feedback_from_L(L, F, G, cost.R)
    values, _ = closed_loop_costs(K, F, G, x0, cost)
    return values


def s2_values(L: np.ndarray, F: np.ndarray, G: np.ndarray, x0: np.ndarray, cost: CostSpec):
    LtL = L.T @ L
    K = feedback_from_L(L, F, G, cost.R, LtL=LtL)
    F_K = F + np.einsum("ij,njk->nik", G, K)
    z = np.broadcast_to(x0, (F.shape[0], x0.shape[0])).copy()
    for _ in range(cost.T):
        z = np.einsum("nij,nj->ni", F_K, z)
    head = float(np.sum((L @ x0) ** 2))
    return head + np.einsum("ni,ij,nj->n", z, cost.S - LtL, z)


def nelder_mead(
    fun: Callable[[np.ndarray], float], x0: np.ndarray, config: NelderMeadConfig
) -> NelderMeadResult:
    """
    scipy Nelder-Mead from the simplex x0, x0 + step e_k, with restarts from the
    best vertex while the evaluation budget max_eval_factor * dim lasts.
    """
    dim = x0.size
    budget = config.max_eval_factor * dim
    best_x, best_f = x0, float(fun(x0))
    used = 1
    converged = False
    for attempt in range(config.restarts + 1):
        remaining = budget - used
        if remaining <= dim + 1:
            break
        simplex = np.vstack([best_x, best_x + config.initial_step * np.eye(dim)])
        result = minimize(
            fun,
            best_x,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": remaining,
                "xatol": config.xatol,
                "fatol": config.fatol,
            },
        )
        used += int(result.nfev)
        converged = bool(result.success)
        if result.fun <= best_f:
            best_x, best_f = result.x, float(result.fun)
        logger.debug(
            "Nelder-Mead pass finished",
            extra={"iteration": attempt, "best": best_f, "evaluations": used},
        )
    return NelderMeadResult(x=best_x, fun=best_f, evaluations=used, converged=converged)


class _WorstCaseObjective:
    """max_i values_i(L) with non-finite values mapped to +inf."""

    def __init__(self, values: ValuesFn, F: np.ndarray, G: np.ndarray, x0: np.ndarray, cost: CostSpec):
        self.values = values
        self.F = F
        self.G = G
        self.x0 = x0
        self.cost = cost
        self.n = F.shape[1]
        self.strict_maximizers: Set[int] = set()

    def per_scenario(self, L: np.ndarray) -> np.ndarray:
        try:
            with np.errstate(all="ignore"):
                v = np.asarray(self.values(L, self.F, self.G, self.x0, self.cost), dtype=float)
        except (SingularMatrixError, ValidationError):
            return np.full(self.F.shape[0], np.inf)
        return np.where(np.isfinite(v), v, np.inf)

    def __call__(self, flat: np.ndarray) -> float:
        v = self.per_scenario(flat.reshape(self.n, self.n))
        top = int(np.argmax(v))
        if np.count_nonzero(v == v[top]) == 1:
            self.strict_maximizers.add(top)
        return float(v[top])


def _values_for(method: Method) -> ValuesFn:
    if method == Method.S1:
        return s1_values
    if method == Method.S2:
        return s2_values
    raise ValidationError(f"{method.value} is not an L-parameterized method")


def worst_case_value(
    method: Method, L: np.ndarray, F: np.ndarray, G: np.ndarray, x0: np.ndarray, cost: CostSpec
) -> float:
    """The S1 or S2 search objective at L: max over the stack, inf when any value is not finite."""
    return float(np.max(_WorstCaseObjective(_values_for(method), F, G, x0, cost).per_scenario(L)))


def run_are_feedback(
    method: Method,
    F_stack: np.ndarray,
    G: np.ndarray,
    x0: np.ndarray,
    cost: CostSpec,
    config: Optional[NelderMeadConfig] = None,
    rng: Optional[np.random.Generator] = None,
    initial: Optional[np.ndarray] = None,
) -> AreFeedbackRun:
    """
    Worst-case S1 or S2 over a stack of state matrices sharing G and x0.

    The search starts from ``initial`` when given, else from a random L.
    """
    values = _values_for(method)
    config = config or NelderMeadConfig()
    rng = rng if rng is not None else np.random.default_rng()
    started = time.perf_counter()
    n = F_stack.shape[1]

    objective = _WorstCaseObjective(values, F_stack, G, x0, cost)
    if initial is not None:
        L0 = np.array(initial, dtype=float).reshape(n, n)
    else:
        L0 = config.init_scale * rng.standard_normal((n, n))
    result = nelder_mead(objective, L0.ravel(), config)
    if not result.converged:
        logger.warning(
            "Nelder-Mead stopped on its evaluation budget",
            extra={"method": method.value, "evaluations": result.evaluations},
        )

    L = result.x.reshape(n, n)
    K_all = feedback_from_L(L, F_stack, G, cost.R)
    J_all, F_K = closed_loop_costs(K_all, F_stack, G, x0, cost)
    worst = int(np.argmax(objective.per_scenario(L)))
    rho = max(spectral_radius(F_i) for F_i in F_K)
    if rho >= 1.0 - STABILITY_EPS:
        logger.info("gain does not stabilize every scenario", extra={"method": method.value})

    solution = StabilizedSolution(
        K=K_all[worst],
        method=method,
        rho_closed=rho,
        J=float(np.max(J_all)),
        objective=result.fun,
        iterations=result.evaluations,
        wall_time_s=time.perf_counter() - started,
        converged=result.converged,
        L=L,
        diagnostics={"worst_scenario": worst},
    )
    return AreFeedbackRun(solution=solution, influential=frozenset(objective.strict_maximizers))


def s1_solve(
    system: LtiSystem,
    cost: CostSpec,
    config: Optional[NelderMeadConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> StabilizedSolution:
    cost.check_compatible(system)
    return run_are_feedback(
        Method.S1, system.F[None, :, :], system.G, system.x0, cost, config, rng
    ).solution


def s2_solve(
    system: LtiSystem,
    cost: CostSpec,
    config: Optional[NelderMeadConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> StabilizedSolution:
    cost.check_compatible(system)
    return run_are_feedback(
        Method.S2, system.F[None, :, :], system.G, system.x0, cost, config, rng
    ).solution
