"""
Worst-case versions of S0, S1, S2 and S-infinity over a scenario set.

Identical scenarios are merged before solving, so N copies of one system give
exactly the N = 1 result. Every run also reports which scenarios could have
influenced the decision; the support subsampling uses that to skip re-solves.
"""

import logging
import time
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.core.constants import Method
from src.core.exceptions import NotDetectableError, ValidationError
from src.models.schemas import (
    CostSpec,
    LtiSystem,
    NelderMeadConfig,
    S0Config,
    ScenarioSet,
    StabilizedSolution,
)
from src.solvers.are_feedback import closed_loop_costs, run_are_feedback, worst_case_value
from src.solvers.lqr import rollout
from src.solvers.riccati import feedback_from_L, solve_are
from src.solvers.s0 import run_s0
from src.solvers.scenario import ScenarioOutcome, unique_scenarios
from src.utils.matrix_kernel import spectral_radius
from src.utils.rng import make_rng

logger = logging.getLogger(__name__)

ROBUST_METHODS = (Method.S0, Method.S1, Method.S2, Method.SINF)


class RobustRun(NamedTuple):
    solution: StabilizedSolution
    influential: FrozenSet[int]
    retained: int


def gain_for(solution: StabilizedSolution, F: np.ndarray, G: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Gain applied to the system with state matrix F; L-based methods recompute it from L."""
    if solution.L is not None:
        return feedback_from_L(solution.L, F, G, R)
    return solution.K


def _decision(solution: StabilizedSolution) -> np.ndarray:
    return np.asarray(solution.L if solution.L is not None else solution.K, dtype=float)


def _expand(groups: List[List[int]], members) -> FrozenSet[int]:
    return frozenset(i for g in members for i in groups[g])


def _sinf_worst_case(
    F_unique: np.ndarray, groups: List[List[int]], G: np.ndarray, x0: np.ndarray, cost: CostSpec
) -> Tuple[StabilizedSolution, FrozenSet[int], int]:
    started = time.perf_counter()
    detectable: List[int] = []
    candidates = []
    for j, F_j in enumerate(F_unique):
        try:
            are = solve_are(F_j, G, cost.Q, cost.R)
        except NotDetectableError:
            logger.debug("discarding non-detectable scenario", extra={"method": Method.SINF.value})
            continue
        J_j = rollout(LtiSystem(F=F_j, G=G, x0=x0), cost, are.K).cost
        detectable.append(j)
        candidates.append((J_j, are))
    if not detectable:
        raise NotDetectableError("no scenario has a detectable (F, Q^1/2) pair")

    own_costs = np.array([c[0] for c in candidates])
    top = float(np.max(own_costs))
    winners = [detectable[p] for p in np.flatnonzero(own_costs == top)]
    pick = int(np.argmax(own_costs))
    are = candidates[pick][1]

    J_retained = [
        rollout(LtiSystem(F=F_unique[j], G=G, x0=x0), cost, are.K).cost for j in detectable
    ]
    worst = max(J_retained)
    solution = StabilizedSolution(
        K=are.K,
        method=Method.SINF,
        rho_closed=max(spectral_radius(F_unique[j] + G @ are.K) for j in detectable),
        J=worst,
        objective=worst,
        iterations=are.iterations,
        wall_time_s=time.perf_counter() - started,
        converged=True,
        M_inf=are.M,
        diagnostics={"are_residual": are.residual, "selected_scenario": groups[detectable[pick]][0]},
    )
    retained = sum(len(groups[j]) for j in detectable)
    return solution, _expand(groups, winners), retained


def robust_run(
    method: Method,
    scenarios: ScenarioSet,
    cost: CostSpec,
    s0_config: Optional[S0Config] = None,
    nm_config: Optional[NelderMeadConfig] = None,
    rng: Optional[np.random.Generator] = None,
    initial: Optional[np.ndarray] = None,
) -> RobustRun:
    """The robust solve behind robust_solve; ``initial`` seeds K for S0 and L for S1 and S2."""
    method = Method(method)
    if method not in ROBUST_METHODS:
        raise ValidationError(f"{method.value} has no scenario version")
    cost.check_compatible(scenarios.system(0))
    F_unique, groups = unique_scenarios(scenarios.F)
    G, x0 = scenarios.G, scenarios.x0
    retained = scenarios.N

    if method == Method.S0:
        run = run_s0(F_unique, G, x0, cost, s0_config, rng, initial_gain=initial)
        solution = run.solution
        influential = _expand(groups, run.active | run.binding)
    elif method in (Method.S1, Method.S2):
        run = run_are_feedback(method, F_unique, G, x0, cost, nm_config, rng, initial=initial)
        solution = run.solution
        influential = _expand(groups, run.influential)
    else:
        solution, influential, retained = _sinf_worst_case(F_unique, groups, G, x0, cost)

    logger.info(
        "robust solve finished",
        extra={"method": method.value, "scenario_count": scenarios.N, "retained": retained},
    )
    return RobustRun(solution=solution, influential=influential, retained=retained)


def robust_solve(
    method: Method,
    scenarios: ScenarioSet,
    cost: CostSpec,
    s0_config: Optional[S0Config] = None,
    nm_config: Optional[NelderMeadConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> StabilizedSolution:
    """
    min over the decision of max over scenarios. S-infinity discards
    non-detectable scenarios and raises NotDetectableError when none remain.
    """
    run = robust_run(method, scenarios, cost, s0_config, nm_config, rng)
    diagnostics = dict(run.solution.diagnostics)
    diagnostics.update({"influential": sorted(run.influential), "retained": run.retained})
    return run.solution.model_copy(update={"diagnostics": diagnostics})


class RobustProgram:
    """
    A robust method restricted to a subset of scenarios, re-seeded identically
    on every call so that equal inputs give equal decisions.

    The first full-sample run becomes the incumbent: searches on proper subsets
    start from its decision, and every outcome of S0, S1 and S2 carries the
    worst case of its decision over the full sample. S-infinity outcomes are
    compared by their gain.
    """

    def __init__(
        self,
        method: Method,
        scenarios: ScenarioSet,
        cost: CostSpec,
        seed: int,
        keys: Sequence[int] = (),
        s0_config: Optional[S0Config] = None,
        nm_config: Optional[NelderMeadConfig] = None,
    ):
        self.method = Method(method)
        self.scenarios = scenarios
        self.cost = cost
        self.seed = seed
        self.keys = tuple(keys)
        self.s0_config = s0_config
        self.nm_config = nm_config
        self._runs: Dict[Tuple[int, ...], RobustRun] = {}
        self._incumbent: Optional[np.ndarray] = None

    def run(self, indices: Sequence[int]) -> RobustRun:
        key = tuple(sorted(int(i) for i in indices))
        if key not in self._runs:
            full = len(key) == self.scenarios.N
            run = robust_run(
                self.method,
                self.scenarios.subset(key),
                self.cost,
                self.s0_config,
                self.nm_config,
                make_rng(self.seed, *self.keys),
                initial=None if full else self._incumbent,
            )
            self._runs[key] = run
            if full and self._incumbent is None:
                self._incumbent = _decision(run.solution)
        return self._runs[key]

    def full_value(self, solution: StabilizedSolution) -> Optional[float]:
        """Worst case of the decision over every scenario; None for S-infinity."""
        F, G, x0 = self.scenarios.F, self.scenarios.G, self.scenarios.x0
        if self.method == Method.SINF:
            return None
        if solution.L is not None:
            return worst_case_value(self.method, solution.L, F, G, x0, self.cost)
        K = np.broadcast_to(solution.K, (F.shape[0],) + solution.K.shape)
        with np.errstate(all="ignore"):
            costs, _ = closed_loop_costs(K, F, G, x0, self.cost)
        return float(np.max(np.where(np.isfinite(costs), costs, np.inf)))

    def solve(self, indices: Sequence[int]) -> ScenarioOutcome:
        idx = sorted(int(i) for i in indices)
        try:
            run = self.run(idx)
        except NotDetectableError:
            n, m = self.scenarios.F.shape[1], self.scenarios.G.shape[1]
            return ScenarioOutcome(decision=np.full(m * n, np.inf), influential=frozenset(idx))
        return ScenarioOutcome(
            decision=_decision(run.solution).ravel(),
            influential=frozenset(idx[j] for j in run.influential),
            value=self.full_value(run.solution),
        )
