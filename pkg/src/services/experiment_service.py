"""
Benchmark experiments: Monte Carlo over random Leslie models, the
non-detectable example, the scenario experiment and single solves.

Trials run on a thread pool. Each trial and method draws from its own
Philox stream derived from (seed, trial, stream, method), so rows do not
depend on scheduling; they are returned ordered by (trial, method).
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.config import settings
from src.core.constants import ExperimentKind, Method, TrialStatus
from src.core.exceptions import ConfigurationError, LqrToolkitException, NotDetectableError
from src.core.logging_config import TrialLogger
from src.models.schemas import (
    CostSpec,
    ExperimentConfig,
    ExperimentSummary,
    LtiSystem,
    MethodSummary,
    ScenarioSet,
    SolveReport,
    StabilizedSolution,
    TrialRecord,
)
from src.providers.leslie import (
    leslie_cost,
    leslie_system,
    nominal_scenario_params,
    nominal_uncertainty,
    sample_from_config,
    sample_scenarios,
)
from src.solvers.lqr import optimal_cost, rollout
from src.solvers.registry import SolverRegistry
from src.solvers.robust import RobustProgram, gain_for
from src.solvers.scenario import greedy_support_subsample, scenario_violation_report
from src.utils.matrix_kernel import spectral_radius
from src.utils.rng import (
    STREAM_INIT,
    STREAM_SCENARIOS,
    STREAM_SYSTEM,
    STREAM_VALIDATION,
    make_rng,
    method_key,
)

logger = logging.getLogger(__name__)

# Per-trial failures that become a failed row instead of aborting the run
_TRIAL_FAILURES = (LqrToolkitException, np.linalg.LinAlgError, ValueError, RuntimeError)


def nondetectable_problem() -> Tuple[LtiSystem, CostSpec]:
    """F = diag(2, 1), G = [1; 1], R = 1, Q = diag(1, 0), S = I, x0 = [1, 0], T = 8."""
    system = LtiSystem(F=np.diag([2.0, 1.0]), G=[[1.0], [1.0]], x0=[1.0, 0.0])
    cost = CostSpec(Q=np.diag([1.0, 0.0]), R=[[1.0]], S=np.eye(2), T=8)
    return system, cost


def relative_gap(J: Optional[float], J_star: float) -> Optional[float]:
    if J is None or not np.isfinite(J) or J_star <= 0.0:
        return None
    return (J - J_star) / J_star


class ExperimentService:
    def __init__(self, config: ExperimentConfig, registry: Optional[SolverRegistry] = None):
        self.config = config
        self.registry = registry or SolverRegistry(config.s0, config.nelder_mead)
        self.workers = config.max_workers or settings.MAX_WORKERS
        self.run_id = f"{config.kind.value}-{config.seed}"

    # --- shared plumbing ---------------------------------------------------

    def _map_trials(self, fn: Callable[[int], List[TrialRecord]]) -> List[TrialRecord]:
        trials = range(self.config.trials)
        if self.workers <= 1:
            chunks = [fn(t) for t in trials]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                chunks = list(pool.map(fn, trials))
        order = {m: i for i, m in enumerate(self.config.methods)}
        records = [r for chunk in chunks for r in chunk]
        return sorted(records, key=lambda r: (r.trial, order[r.method]))

    def _elapsed_ms(self, started: float) -> Optional[float]:
        if not self.config.record_timing:
            return None
        return (time.perf_counter() - started) * 1000.0

    def _open_loop_record(
        self, trial: int, method: Method, system: LtiSystem, cost: CostSpec, J_star: float, started
    ) -> TrialRecord:
        K = np.zeros((system.m, system.n))
        J = rollout(system, cost, K).cost
        return TrialRecord(
            trial=trial,
            method=method,
            rho_open=spectral_radius(system.F),
            rho_closed=spectral_radius(system.F),
            J=J,
            J_star=J_star,
            rel_gap=relative_gap(J, J_star),
            time_ms=self._elapsed_ms(started),
            converged=False,
            status=TrialStatus.NOT_DETECTABLE,
            gain=K,
            state_matrix=system.F,
        )

    def _failed_record(
        self, trial: int, method: Method, rho_open: float, J_star: float, started
    ) -> TrialRecord:
        return TrialRecord(
            trial=trial,
            method=method,
            rho_open=rho_open,
            J_star=J_star,
            time_ms=self._elapsed_ms(started),
            converged=False,
            status=TrialStatus.FAILED,
        )

    def _solve_record(
        self, trial: int, method: Method, system: LtiSystem, cost: CostSpec, J_star: float
    ) -> TrialRecord:
        log = TrialLogger(logger, trial, method.value, run_id=self.run_id)
        rng = make_rng(self.config.seed, trial, STREAM_INIT, method_key(method))
        rho_open = spectral_radius(system.F)
        started = time.perf_counter()
        try:
            solution = self.registry.get_solver(method).solve(
                ScenarioSet.from_system(system), cost, rng
            )
        except NotDetectableError:
            log.info("not detectable; recording the open loop")
            return self._open_loop_record(trial, method, system, cost, J_star, started)
        except _TRIAL_FAILURES as e:
            log.warning(f"solver failed: {type(e).__name__}: {e}")
            return self._failed_record(trial, method, rho_open, J_star, started)

        rho_closed = spectral_radius(system.F + system.G @ solution.K)
        log.debug("trial solved", rho_closed=rho_closed, J=solution.J)
        return TrialRecord(
            trial=trial,
            method=method,
            rho_open=rho_open,
            rho_closed=rho_closed,
            J=solution.J,
            J_star=J_star,
            rel_gap=relative_gap(solution.J, J_star),
            time_ms=self._elapsed_ms(started),
            converged=solution.converged,
            gain=solution.K,
            state_matrix=system.F,
        )

    def _leslie_cost(self, n: int) -> CostSpec:
        return self.config.cost if self.config.cost is not None else leslie_cost(n)

    # --- experiments -------------------------------------------------------

    def run_montecarlo(self) -> List[TrialRecord]:
        sampling = self.config.leslie
        cost = self._leslie_cost(sampling.n)

        def trial(t: int) -> List[TrialRecord]:
            params = sample_from_config(make_rng(self.config.seed, t, STREAM_SYSTEM), sampling)
            system = leslie_system(params, self.config.initial_state)
            J_star = optimal_cost(system, cost)
            return [self._solve_record(t, m, system, cost, J_star) for m in self.config.methods]

        logger.info(
            "starting Monte Carlo run", extra={"run_id": self.run_id, "trials": self.config.trials}
        )
        return self._map_trials(trial)

    def run_nondetectable(self) -> List[TrialRecord]:
        if self.config.system is not None and self.config.cost is not None:
            system, cost = self.config.system, self.config.cost
        else:
            system, cost = nondetectable_problem()
        J_star = optimal_cost(system, cost)

        def trial(t: int) -> List[TrialRecord]:
            return [self._solve_record(t, m, system, cost, J_star) for m in self.config.methods]

        return self._map_trials(trial)

    def _scenario_record(
        self,
        trial: int,
        method: Method,
        train: ScenarioSet,
        fresh: Optional[ScenarioSet],
        cost: CostSpec,
        rho_open: float,
        J_star: float,
    ) -> TrialRecord:
        log = TrialLogger(logger, trial, method.value, run_id=self.run_id, scenario_count=train.N)
        experiment = self.config.scenario
        program = RobustProgram(
            method,
            train,
            cost,
            seed=self.config.seed,
            keys=(trial, STREAM_INIT, method_key(method)),
            s0_config=self.config.s0,
            nm_config=self.config.nelder_mead,
        )
        started = time.perf_counter()
        try:
            full = program.run(range(train.N))
            solution: StabilizedSolution = full.solution
            # S-infinity gains are compared directly; the searches by worst-case cost
            tol = (
                self.config.unchanged_tol if method == Method.SINF else self.config.support_value_tol
            )
            support = greedy_support_subsample(
                program,
                train.N,
                experiment.beta,
                tol=tol,
                max_workers=self.workers,
                n_effective=full.retained,
            )
        except NotDetectableError:
            log.info("no detectable training scenario")
            return self._failed_record(trial, method, rho_open, J_star, started).model_copy(
                update={"status": TrialStatus.NOT_DETECTABLE}
            )
        except _TRIAL_FAILURES as e:
            log.warning(f"robust solve failed: {type(e).__name__}: {e}")
            return self._failed_record(trial, method, rho_open, J_star, started)
        elapsed = self._elapsed_ms(started)

        G, R = train.G, cost.R
        gains = [gain_for(solution, F_i, G, R) for F_i in train.F]
        rhos = [spectral_radius(F_i + G @ K_i) for F_i, K_i in zip(train.F, gains)]
        worst = int(np.argmax(rhos))
        log = log.bind(support=support.cardinality, epsilon=support.epsilon)
        fresh_rate = None
        if fresh is not None:
            report = scenario_violation_report(fresh, lambda F: gain_for(solution, F, G, R))
            fresh_rate = report["stability_rate"]
            log.info("fresh-sample validation", **report)
        log.info("scenario method finished", n_effective=support.n_effective)
        return TrialRecord(
            trial=trial,
            method=method,
            rho_open=rho_open,
            rho_closed=rhos[worst],
            J=solution.J,
            J_star=J_star,
            rel_gap=relative_gap(solution.J, J_star),
            time_ms=elapsed,
            converged=solution.converged,
            epsilon_posterior=support.epsilon,
            gain=gains[worst],
            state_matrix=train.F[worst],
            support_cardinality=support.cardinality,
            fresh_stability_rate=fresh_rate,
        )

    def run_scenario(self) -> List[TrialRecord]:
        experiment = self.config.scenario
        nominal = experiment.nominal or nominal_scenario_params()
        spec = experiment.uncertainty or nominal_uncertainty(len(nominal.kappa))
        cost = self._leslie_cost(nominal.n)
        methods = [m for m in self.config.methods if self.registry.get_solver(m).robust]
        skipped = [m.value for m in self.config.methods if m not in methods]
        if skipped:
            logger.warning("methods without a scenario version are skipped", extra={"skipped": skipped})

        def trial(t: int) -> List[TrialRecord]:
            seed, x0 = self.config.seed, self.config.initial_state
            train = sample_scenarios(
                nominal, spec, experiment.n_train, make_rng(seed, t, STREAM_SCENARIOS), x0
            )
            fresh = None
            if experiment.n_fresh > 0:
                fresh = sample_scenarios(
                    nominal, spec, experiment.n_fresh, make_rng(seed, t, STREAM_VALIDATION), x0
                )
            rho_open = max(spectral_radius(F_i) for F_i in train.F)
            J_star = max(optimal_cost(train.system(i), cost) for i in range(train.N))
            return [
                self._scenario_record(t, m, train, fresh, cost, rho_open, J_star) for m in methods
            ]

        return self._map_trials(trial)

    def run_single(self) -> SolveReport:
        """Solve one system with one method; NotDetectableError becomes a report status."""
        if self.config.system is None or self.config.cost is None:
            raise ConfigurationError("single-solve needs explicit system and cost")
        if len(self.config.methods) != 1:
            raise ConfigurationError("single-solve runs exactly one method; pass --methods")
        method = self.config.methods[0]
        system, cost = self.config.system, self.config.cost
        cost.check_compatible(system)
        rho_open = spectral_radius(system.F)
        J_star = optimal_cost(system, cost)
        rng = make_rng(self.config.seed, 0, STREAM_INIT, method_key(method))
        try:
            solution = self.registry.get_solver(method).solve(
                ScenarioSet.from_system(system), cost, rng
            )
        except NotDetectableError as e:
            return SolveReport(
                method=method,
                status=TrialStatus.NOT_DETECTABLE,
                rho_open=rho_open,
                J_star=J_star,
                message=str(e),
            )
        return SolveReport(
            method=method,
            status=TrialStatus.OK,
            rho_open=rho_open,
            J_star=J_star,
            solution=solution,
            rel_gap=relative_gap(solution.J, J_star),
        )

    def run(self) -> List[TrialRecord]:
        runners: Dict[ExperimentKind, Callable[[], List[TrialRecord]]] = {
            ExperimentKind.MONTECARLO: self.run_montecarlo,
            ExperimentKind.NONDETECTABLE: self.run_nondetectable,
            ExperimentKind.SCENARIO: self.run_scenario,
        }
        if self.config.kind not in runners:
            raise ConfigurationError(f"{self.config.kind.value} does not produce trial records")
        return runners[self.config.kind]()


def run_montecarlo(config: ExperimentConfig) -> List[TrialRecord]:
    return ExperimentService(config).run_montecarlo()


def run_nondetectable(config: ExperimentConfig) -> List[TrialRecord]:
    return ExperimentService(config).run_nondetectable()


def run_scenario(config: ExperimentConfig) -> List[TrialRecord]:
    return ExperimentService(config).run_scenario()


def run_single(config: ExperimentConfig) -> SolveReport:
    return ExperimentService(config).run_single()


# --- summaries -------------------------------------------------------------


def _stabilized(record: TrialRecord) -> bool:
    return (
        record.status == TrialStatus.OK
        and record.rho_closed is not None
        and record.rho_closed < 1.0
    )


def summarize(kind: ExperimentKind, records: List[TrialRecord]) -> ExperimentSummary:
    first_per_trial = {}
    for r in records:
        first_per_trial.setdefault(r.trial, r)
    trials = len(first_per_trial)
    unstable = sum(1 for r in first_per_trial.values() if r.rho_open > 1.0)

    methods: List[MethodSummary] = []
    for method in dict.fromkeys(r.method for r in records):
        rows = [r for r in records if r.method == method]
        gaps = [r.rel_gap for r in rows if r.rel_gap is not None]
        supports = [r.support_cardinality for r in rows if r.support_cardinality is not None]
        eps = [r.epsilon_posterior for r in rows if r.epsilon_posterior is not None]
        fresh = [r.fresh_stability_rate for r in rows if r.fresh_stability_rate is not None]
        methods.append(
            MethodSummary(
                method=method,
                trials=len(rows),
                stabilized=sum(1 for r in rows if _stabilized(r)),
                not_detectable=sum(1 for r in rows if r.status == TrialStatus.NOT_DETECTABLE),
                failed=sum(1 for r in rows if r.status == TrialStatus.FAILED),
                median_rel_gap=float(np.median(gaps)) if gaps else None,
                support_cardinality=max(supports) if supports else None,
                epsilon_posterior=max(eps) if eps else None,
                fresh_stability_rate=float(np.mean(fresh)) if fresh else None,
            )
        )
    return ExperimentSummary(
        kind=kind,
        trials=trials,
        open_loop_unstable_fraction=unstable / trials if trials else 0.0,
        methods=methods,
    )


def _cell(value, fmt: str) -> str:
    return "-" if value is None else format(value, fmt)


def format_summary_table(summary: ExperimentSummary) -> str:
    """Plain-text table: median relative gap and stabilization count per method."""
    scenario = summary.kind == ExperimentKind.SCENARIO
    header = f"{'method':<8}{'median gap':>14}{'stabilized':>12}"
    if scenario:
        header += f"{'|support|':>11}{'epsilon':>10}{'fresh':>9}"
    lines = [
        f"{summary.kind.value}: {summary.trials} trials, "
        f"{summary.open_loop_unstable_fraction:.0%} open-loop unstable",
        header,
        "-" * len(header),
    ]
    for m in summary.methods:
        label = "open loop" if m.not_detectable == m.trials and m.trials else ""
        row = (
            f"{m.method.value:<8}{_cell(m.median_rel_gap, '.4g'):>14}"
            f"{f'{m.stabilized}/{m.trials}':>12}"
        )
        if scenario:
            row += (
                f"{_cell(m.support_cardinality, 'd'):>11}{_cell(m.epsilon_posterior, '.4f'):>10}"
                f"{_cell(m.fresh_stability_rate, '.2f'):>9}"
            )
        lines.append(f"{row}  {label}".rstrip())
    return "\n".join(lines)
