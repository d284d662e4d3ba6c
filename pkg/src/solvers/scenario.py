"""
Scenario approach: sample-size bounds, the a-posteriori violation level,
the convex worst-case LQR program and greedy support subsampling.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import (
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    TypeVar,
)

import numpy as np
from scipy.optimize import minimize, nnls
from scipy.special import gammaln

from src.config import settings
from src.core.constants import EPIGRAPH_KKT_TOL, UNCHANGED_TOL
from src.core.exceptions import ConvergenceError, SingularMatrixError, ValidationError
from src.models.schemas import (
    CostSpec,
    InputSequence,
    RobustnessBudget,
    ScenarioSet,
    SupportSubsample,
)
from src.solvers.lqr import build_p1, p1_constant
from src.utils.matrix_kernel import solve_linear, spectral_radius

logger = logging.getLogger(__name__)

T_co = TypeVar("T_co")

_ACTIVE_TOL = 1e-6
_POLISH_STEPS = 20


def required_scenarios(budget: RobustnessBudget) -> int:
    """Smallest N with N >= (2 / eps)(ln(1 / beta) + d - 1)."""
    bound = (2.0 / budget.epsilon) * (math.log(1.0 / budget.beta) + budget.d - 1)
    return max(1, math.ceil(bound - 1e-9))


def log_binomial(N: int, k: int) -> float:
    return float(gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1))


def epsilon_posterior(k: int, N: int, beta: float) -> float:
    """eps(k) = 1 - (beta / (N * C(N, k)))^(1 / (N - k)), and 1 when k = N."""
    if N < 1 or not 0 <= k <= N:
        raise ValidationError(f"need 0 <= k <= N with N >= 1, got k={k}, N={N}")
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    if k == N:
        return 1.0
    log_ratio = math.log(beta) - math.log(N) - log_binomial(N, k)
    return float(-math.expm1(log_ratio / (N - k)))


def unique_scenarios(F_stack: np.ndarray) -> Tuple[np.ndarray, List[List[int]]]:
    """Distinct state matrices in first-occurrence order, with the indices of each group."""
    seen: Dict[bytes, int] = {}
    groups: List[List[int]] = []
    for i, F_i in enumerate(np.asarray(F_stack, dtype=float)):
        key = np.ascontiguousarray(F_i + 0.0).tobytes()
        if key not in seen:
            seen[key] = len(groups)
            groups.append([])
        groups[seen[key]].append(i)
    return F_stack[[g[0] for g in groups]], groups


# --- convex worst-case LQR -------------------------------------------------


class EpigraphSolution(NamedTuple):
    inputs: InputSequence
    alpha: float
    """max_i of the scenario costs at the returned inputs"""
    active: Tuple[int, ...]
    multipliers: np.ndarray
    """One per scenario; nonnegative, summing to one"""
    kkt_residual: float


class _Quadratics(NamedTuple):
    B: np.ndarray
    a: np.ndarray
    c: np.ndarray

    def values(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("i,nij,j->n", u, self.B, u) + 2.0 * self.a @ u + self.c

    def gradients(self, u: np.ndarray) -> np.ndarray:
        return 2.0 * (np.einsum("nij,j->ni", self.B, u) + self.a)


def _quadratics(scenarios: ScenarioSet, cost: CostSpec) -> _Quadratics:
    B, a, c = [], [], []
    for i in range(scenarios.N):
        system = scenarios.system(i)
        B_i, a_i = build_p1(system, cost)
        B.append(B_i)
        a.append(a_i)
        c.append(p1_constant(system, cost))
    return _Quadratics(B=np.array(B), a=np.array(a), c=np.array(c))


def _slsqp(q: _Quadratics) -> np.ndarray:
    d = q.a.shape[1]
    scale = max(1.0, float(np.max(np.abs(q.values(np.zeros(d))))))

    def constraints(z):
        return z[-1] - q.values(z[:-1]) / scale

    def constraints_jac(z):
        grads = -q.gradients(z[:-1]) / scale
        return np.hstack([grads, np.ones((grads.shape[0], 1))])

    objective_grad = np.zeros(d + 1)
    objective_grad[-1] = 1.0
    z0 = np.zeros(d + 1)
    z0[-1] = float(np.max(q.values(np.zeros(d)))) / scale + 1.0
    result = minimize(
        lambda z: z[-1],
        z0,
        jac=lambda z: objective_grad,
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": constraints, "jac": constraints_jac}],
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    logger.debug("SLSQP finished", extra={"status": int(result.status), "nit": int(result.nit)})
    return result.x[:-1]


def _multipliers(grads: np.ndarray) -> np.ndarray:
    """Nonnegative lam with sum(lam) = 1 and sum lam_i g_i closest to zero."""
    k = grads.shape[0]
    weight = max(1.0, float(np.max(np.abs(grads))))
    A = np.vstack([grads.T, weight * np.ones((1, k))])
    b = np.zeros(A.shape[0])
    b[-1] = weight
    lam, _ = nnls(A, b)
    total = lam.sum()
    return lam / total if total > 0 else np.full(k, 1.0 / k)


def _newton_polish(q: _Quadratics, u: np.ndarray, active: List[int]):
    """Newton on the active-set KKT system; returns (u, alpha, lam) or None."""
    idx = np.array(active)
    alpha = float(np.max(q.values(u)[idx]))
    lam = _multipliers(q.gradients(u)[idx])
    d, k = u.size, idx.size
    for _ in range(_POLISH_STEPS):
        grads = q.gradients(u)[idx]
        residual = np.concatenate(
            [grads.T @ lam, q.values(u)[idx] - alpha, [lam.sum() - 1.0]]
        )
        if np.max(np.abs(residual)) <= 1e-14 * (1.0 + abs(alpha)):
            break
        # unknowns (u, alpha, lam); rows (stationarity, active equalities, sum of lam)
        jac = np.zeros((d + k + 1, d + 1 + k))
        jac[:d, :d] = 2.0 * np.einsum("n,nij->ij", lam, q.B[idx])
        jac[:d, d + 1 :] = grads.T
        jac[d : d + k, :d] = grads
        jac[d : d + k, d] = -1.0
        jac[d + k, d + 1 :] = 1.0
        try:
            step = solve_linear(jac, -residual)
        except SingularMatrixError:
            return None
        u = u + step[:d]
        alpha = alpha + step[d]
        lam = lam + step[d + 1 :]
    return u, alpha, lam


def _kkt_residual(q: _Quadratics, u: np.ndarray, alpha: float, lam: np.ndarray) -> float:
    values = q.values(u)
    grads = q.gradients(u)
    scale = 1.0 + max(abs(alpha), float(np.max(np.abs(grads))))
    parts = [
        float(np.linalg.norm(grads.T @ lam, np.inf)),
        float(np.max(np.maximum(values - alpha, 0.0))),
        float(np.max(np.abs(lam * (alpha - values)))),
        float(max(0.0, -np.min(lam))),
        abs(float(lam.sum()) - 1.0),
    ]
    return max(parts) / scale


def solve_scenario_unconstrained(scenarios: ScenarioSet, cost: CostSpec) -> EpigraphSolution:
    """
    min_{u, alpha} alpha  s.t.  u'B_i u + 2a_i'u + c_i <= alpha  for every scenario.

    SLSQP finds the active set, then Newton on the active-set KKT system
    polishes u, alpha and the multipliers. Identical scenarios are solved once
    and share their multiplier equally.
    """
    unique_F, groups = unique_scenarios(scenarios.F)
    reduced = ScenarioSet(F=unique_F, G=scenarios.G, x0=scenarios.x0)
    q = _quadratics(reduced, cost)
    n_unique = len(groups)

    u = _slsqp(q)
    values = q.values(u)
    top = float(np.max(values))
    active = sorted(
        int(i) for i in np.flatnonzero(values >= top - _ACTIVE_TOL * (1.0 + abs(top)))
    )

    lam_full = np.zeros(n_unique)
    alpha = top
    for _ in range(2 * n_unique + 2):
        polished = _newton_polish(q, u, active)
        if polished is None:
            lam_full = np.zeros(n_unique)
            lam_full[active] = _multipliers(q.gradients(u)[active])
            break
        u_new, alpha_new, lam = polished
        if np.any(lam < 0) and len(active) > 1:
            active.pop(int(np.argmin(lam)))
            continue
        violated = np.flatnonzero(q.values(u_new) > alpha_new + 1e-12 * (1.0 + abs(alpha_new)))
        violated = [int(j) for j in violated if j not in active]
        if violated:
            active = sorted(active + violated[:1])
            continue
        u = u_new
        lam_full = np.zeros(n_unique)
        lam_full[active] = np.maximum(lam, 0.0)
        break

    alpha = float(np.max(q.values(u)))
    residual = _kkt_residual(q, u, alpha, lam_full)
    if residual > EPIGRAPH_KKT_TOL:
        raise ConvergenceError(
            "worst-case LQR program did not reach its KKT tolerance",
            diagnostics={"kkt_residual": residual, "active": active},
        )

    multipliers = np.zeros(scenarios.N)
    active_indices: List[int] = []
    for j, group in enumerate(groups):
        if j in active:
            active_indices.extend(group)
        multipliers[group] = lam_full[j] / len(group)
    return EpigraphSolution(
        inputs=InputSequence(u=u.reshape(cost.T, scenarios.G.shape[1])),
        alpha=alpha,
        active=tuple(sorted(active_indices)),
        multipliers=multipliers,
        kkt_residual=residual,
    )


# --- support subsampling ---------------------------------------------------


class ScenarioOutcome(NamedTuple):
    decision: np.ndarray
    influential: FrozenSet[int]
    """Indices (into the full sample) whose removal could change the decision"""
    value: Optional[float] = None
    """Worst-case cost of the decision over the full sample, if the program reports one"""


class ScenarioProgram(Protocol):
    def solve(self, indices: Sequence[int]) -> ScenarioOutcome: ...


class EpigraphProgram:
    """The convex worst-case LQR program restricted to a subset of scenarios."""

    def __init__(self, scenarios: ScenarioSet, cost: CostSpec):
        self.scenarios = scenarios
        self.cost = cost

    def solve(self, indices: Sequence[int]) -> ScenarioOutcome:
        idx = sorted(int(i) for i in indices)
        solution = solve_scenario_unconstrained(self.scenarios.subset(idx), self.cost)
        decision = np.append(solution.inputs.stacked, solution.alpha)
        return ScenarioOutcome(
            decision=decision, influential=frozenset(idx[j] for j in solution.active)
        )


def _changed(reference: ScenarioOutcome, other: ScenarioOutcome, tol: float) -> bool:
    if reference.value is not None and other.value is not None:
        # a re-solve no worse on the full sample leaves the reference optimal
        return other.value > reference.value + tol * (1.0 + abs(reference.value))
    ref, new = reference.decision, other.decision
    return float(np.linalg.norm(new - ref)) > tol * (1.0 + float(np.linalg.norm(ref)))


def _map_ordered(fn: Callable, items: List, max_workers: int) -> List:
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def greedy_support_subsample(
    program: ScenarioProgram,
    n_scenarios: int,
    beta: float,
    tol: float = UNCHANGED_TOL,
    max_workers: Optional[int] = None,
    n_effective: Optional[int] = None,
) -> SupportSubsample:
    """
    Leave-one-out support detection followed by a greedy reduction to an
    irreducible subsample whose solution matches the full-sample solution.

    Scenarios outside the current outcome's influential set are dropped
    without a re-solve. Outcomes that carry a value are compared by it, so a
    re-solve counts as unchanged unless its worst case over the full sample
    exceeds the full solve's by more than tol (relative). ``n_effective``
    replaces N in the violation bound when only part of the sample entered
    the problem.
    """
    workers = max_workers or settings.MAX_WORKERS
    everything = list(range(n_scenarios))
    full = program.solve(everything)

    def without(i: int, pool: Iterable[int]) -> ScenarioOutcome:
        return program.solve([j for j in pool if j != i])

    candidates = sorted(full.influential) if n_scenarios > 1 else []
    loo = _map_ordered(lambda i: without(i, everything), candidates, workers)
    support = [i for i, outcome in zip(candidates, loo) if _changed(full, outcome, tol)]
    logger.info(
        "leave-one-out pass finished",
        extra={"scenario_count": n_scenarios, "support": len(support)},
    )

    current, outcome = everything, full
    if support:
        on_support = program.solve(support)
        if not _changed(full, on_support, tol):
            current, outcome = support, on_support

    # Two passes: the greedy reduction, then the irreducibility confirmation.
    for _ in range(2):
        removed = False
        for i in list(current):
            if len(current) == 1:
                break
            if i not in outcome.influential:
                current = [j for j in current if j != i]
                removed = True
                continue
            trial = without(i, current)
            if not _changed(full, trial, tol):
                current, outcome = [j for j in current if j != i], trial
                removed = True
        if not removed:
            break

    cardinality = len(current)
    n_eff = n_scenarios if n_effective is None else n_effective
    return SupportSubsample(
        indices=tuple(current),
        cardinality=cardinality,
        epsilon=epsilon_posterior(cardinality, n_eff, beta),
        n_effective=n_eff,
    )


# --- empirical violation ---------------------------------------------------


def validate_violation(samples: Sequence[T_co], violates: Callable[[T_co], bool]) -> float:
    """Fraction of fresh samples for which the constraint is violated."""
    if len(samples) == 0:
        return 0.0
    return sum(1 for s in samples if violates(s)) / len(samples)


def scenario_violation_report(
    fresh: ScenarioSet, gain_for: Callable[[np.ndarray], np.ndarray]
) -> Dict[str, float]:
    """Fresh-sample stability of the gains K = gain_for(F): rates of rho(F + G K) < 1 and >= 1."""
    rhos = [spectral_radius(F_i + fresh.G @ gain_for(F_i)) for F_i in fresh.F]
    violation = validate_violation(rhos, lambda rho: rho >= 1.0)
    return {
        "n_fresh": fresh.N,
        "stability_rate": 1.0 - violation,
        "violation_rate": violation,
        "max_rho": float(max(rhos)),
    }
