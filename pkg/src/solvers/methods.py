"""
Registered methods: the classic time-varying LQR and the constant-gain
designs S0, S1, S2 and S-infinity.
"""

import time
from typing import Optional

import numpy as np

from src.core.constants import Method
from src.core.exceptions import ValidationError
from src.models.schemas import (
    CostSpec,
    NelderMeadConfig,
    S0Config,
    ScenarioSet,
    StabilizedSolution,
)
from src.solvers.are_feedback import s1_solve, s2_solve
from src.solvers.base import Solver
from src.solvers.lqr import dre_sweep
from src.solvers.riccati import sinf_solve
from src.solvers.robust import robust_solve
from src.solvers.s0 import s0_solve
from src.utils.matrix_kernel import spectral_radius


def classic_solution(scenarios: ScenarioSet, cost: CostSpec) -> StabilizedSolution:
    """
    Time-varying Riccati feedback. The recorded gain is K_{T-1}, the one in
    force at the end of the horizon, and J equals the optimum x0'M_0 x0.
    """
    if scenarios.N != 1:
        raise ValidationError("classic LQR is defined for a single system")
    started = time.perf_counter()
    system = scenarios.system(0)
    cost.check_compatible(system)
    sweep = dre_sweep(system, cost)
    K_last = sweep.K[-1]
    J = float(system.x0 @ sweep.M[0] @ system.x0)
    return StabilizedSolution(
        K=K_last,
        method=Method.CLASSIC,
        rho_closed=spectral_radius(system.F + system.G @ K_last),
        J=J,
        objective=J,
        iterations=cost.T,
        wall_time_s=time.perf_counter() - started,
        converged=True,
    )


class ClassicSolver(Solver):
    def get_method(self) -> Method:
        return Method.CLASSIC

    def get_description(self) -> str:
        return "Finite-horizon LQR via the backward Riccati sweep (time-varying gains)"

    @property
    def robust(self) -> bool:
        return False

    def solve(self, scenarios, cost, rng=None) -> StabilizedSolution:
        return classic_solution(scenarios, cost)


class S0Solver(Solver):
    def __init__(self, config: Optional[S0Config] = None):
        self.config = config or S0Config()
        super().__init__()

    def get_method(self) -> Method:
        return Method.S0

    def get_description(self) -> str:
        return "Alternating minimization with a Lyapunov LMI stability certificate"

    def solve(self, scenarios, cost, rng: Optional[np.random.Generator] = None):
        if scenarios.N == 1:
            return s0_solve(scenarios.system(0), cost, self.config, rng)
        return robust_solve(Method.S0, scenarios, cost, s0_config=self.config, rng=rng)


class _LFactorSolver(Solver):
    def __init__(self, config: Optional[NelderMeadConfig] = None):
        self.config = config or NelderMeadConfig()
        super().__init__()

    def solve(self, scenarios, cost, rng: Optional[np.random.Generator] = None):
        if scenarios.N == 1:
            single = s1_solve if self.method == Method.S1 else s2_solve
            return single(scenarios.system(0), cost, self.config, rng)
        return robust_solve(self.method, scenarios, cost, nm_config=self.config, rng=rng)


class S1Solver(_LFactorSolver):
    def get_method(self) -> Method:
        return Method.S1

    def get_description(self) -> str:
        return "Nelder-Mead over L with K(L) from the ARE feedback map, closed-loop cost"


class S2Solver(_LFactorSolver):
    def get_method(self) -> Method:
        return Method.S2

    def get_description(self) -> str:
        return "Nelder-Mead over L on the terminal-weight surrogate objective"


class SinfSolver(Solver):
    def get_method(self) -> Method:
        return Method.SINF

    def get_description(self) -> str:
        return "Stabilizing solution of the algebraic Riccati equation"

    def solve(self, scenarios, cost, rng=None) -> StabilizedSolution:
        if scenarios.N == 1:
            return sinf_solve(scenarios.system(0), cost)
        return robust_solve(Method.SINF, scenarios, cost)
