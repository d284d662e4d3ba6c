"""
S0: alternating minimization for a stabilizing constant feedback.

The objective is v(K) + (1/2 mu) |K C - D|_F^2, where v(K) is the finite-horizon
cost of u_t = K x_t. Block (C1) minimizes over K with L-BFGS using the adjoint
gradient; block (C2) minimizes |K C - D|_F^2 over the Lyapunov LMI set. With
several scenarios, v is the pointwise max of the per-scenario costs and the LMI
must hold for every scenario at once.
"""

import logging
import time
from typing import FrozenSet, NamedTuple, Optional, Set, Tuple

import numpy as np
from scipy.optimize import minimize

from src.core.constants import STABILITY_EPS, Method
from src.core.exceptions import SingularMatrixError
from src.models.schemas import CostSpec, LmiCertificate, LtiSystem, S0Config, StabilizedSolution
from src.solvers.lmi import C2Result, c2_solve
from src.utils.matrix_kernel import spectral_radius

logger = logging.getLogger(__name__)

_LINE_SEARCH_FAILURE = 2


class C1Evaluation(NamedTuple):
    value: float
    """max over scenarios of v_i(K)"""
    values: np.ndarray
    active: int
    """Scenario attaining the max; lowest index on ties"""
    penalty: float
    objective: float
    gradient: np.ndarray
    states: np.ndarray
    """(N, T + 1, n), x_t = (F + G K)^t x0"""
    costates: np.ndarray
    """(N, T + 1, n)"""


class S0Run(NamedTuple):
    solution: StabilizedSolution
    active: FrozenSet[int]
    binding: FrozenSet[int]


def c1_evaluate(
    K: np.ndarray,
    C: np.ndarray,
    D: np.ndarray,
    F: np.ndarray,
    G: np.ndarray,
    x0: np.ndarray,
    cost: CostSpec,
    mu: float,
) -> C1Evaluation:
    """
    Closed-loop value, adjoint states and gradient of the (C1) objective.

    The costate runs backward from lambda_T = -2 S x_T with
    lambda_t = -2 (Q + K'RK) x_t + (F + GK)' lambda_{t+1}, which solves the
    stationarity condition of the Lagrangian in x. The gradient of v at the
    active scenario is sum_t [2 R K x_t x_t' - G' lambda_{t+1} x_t'], and the
    penalty contributes (K C - D) C' / mu.
    """
    F_stack = F[None, :, :] if F.ndim == 2 else F
    N, n, _ = F_stack.shape
    T = cost.T
    F_K = F_stack + (G @ K)[None, :, :]
    Q_K = cost.Q + K.T @ cost.R @ K

    x = np.empty((N, T + 1, n))
    x[:, 0] = x0
    for t in range(T):
        x[:, t + 1] = np.einsum("nij,nj->ni", F_K, x[:, t])

    values = np.einsum("nti,ij,ntj->n", x[:, :T], Q_K, x[:, :T]) + np.einsum(
        "ni,ij,nj->n", x[:, T], cost.S, x[:, T]
    )

    lam = np.empty_like(x)
    lam[:, T] = -2.0 * x[:, T] @ cost.S
    for t in range(T - 1, -1, -1):
        lam[:, t] = -2.0 * x[:, t] @ Q_K + np.einsum("nji,nj->ni", F_K, lam[:, t + 1])

    active = int(np.argmax(values))
    X = x[active, :T]
    Lam = lam[active, 1:]
    grad_v = 2.0 * cost.R @ K @ (X.T @ X) - G.T @ (Lam.T @ X)

    gap = K @ C - D
    penalty = float(np.sum(gap * gap)) / (2.0 * mu)
    gradient = grad_v + gap @ C.T / mu
    value = float(values[active])
    return C1Evaluation(
        value=value,
        values=values,
        active=active,
        penalty=penalty,
        objective=value + penalty,
        gradient=gradient,
        states=x,
        costates=lam,
    )


def c1_value_and_gradient(
    K: np.ndarray, C: np.ndarray, D: np.ndarray, system: LtiSystem, cost: CostSpec, mu: float
) -> Tuple[float, np.ndarray]:
    """v(K) and the gradient of v(K) + (1/2 mu)|K C - D|_F^2."""
    evaluation = c1_evaluate(K, C, D, system.F, system.G, system.x0, cost, mu)
    return evaluation.value, evaluation.gradient


class _AlternatingSolver:
    def __init__(
        self,
        F_stack: np.ndarray,
        G: np.ndarray,
        x0: np.ndarray,
        cost: CostSpec,
        config: S0Config,
    ):
        self.F = F_stack
        self.G = G
        self.x0 = x0
        self.cost = cost
        self.config = config
        self.active: Set[int] = set()

    def evaluate(self, K, C, D) -> C1Evaluation:
        return c1_evaluate(K, C, D, self.F, self.G, self.x0, self.cost, self.config.mu)

    def step_c1(self, K: np.ndarray, C: np.ndarray, D: np.ndarray) -> np.ndarray:
        shape = K.shape

        def fun(k: np.ndarray):
            evaluation = self.evaluate(k.reshape(shape), C, D)
            self.active.add(evaluation.active)
            return evaluation.objective, evaluation.gradient.ravel()

        options = {"maxcor": self.config.lbfgs_memory, "maxiter": self.config.lbfgs_max_iter}
        result = minimize(fun, K.ravel(), jac=True, method="L-BFGS-B", options=options)
        if result.status == _LINE_SEARCH_FAILURE:
            logger.debug("L-BFGS line search failed; restarting with fresh memory")
            result = minimize(fun, result.x, jac=True, method="L-BFGS-B", options=options)

        K_new = result.x.reshape(shape)
        if not np.all(np.isfinite(K_new)):
            return K
        if self.evaluate(K_new, C, D).objective > self.evaluate(K, C, D).objective:
            return K
        return K_new

    def step_c2(self, K: np.ndarray, certificate: Optional[LmiCertificate]) -> C2Result:
        c2 = c2_solve(K, self.F, self.G, self.config.xi, self.config, warm_start=certificate)
        if certificate is not None:
            previous = float(np.linalg.norm(K @ certificate.C - certificate.D, "fro"))
            if previous < c2.residual:
                return C2Result(certificate, previous, previous == 0.0, 0, True, c2.binding)
        return c2

    def stabilizes(self, K: np.ndarray) -> bool:
        return all(spectral_radius(F_i + self.G @ K) < 1.0 - STABILITY_EPS for F_i in self.F)

    def max_rho(self, K: np.ndarray) -> float:
        return max(spectral_radius(F_i + self.G @ K) for F_i in self.F)


def run_s0(
    F_stack: np.ndarray,
    G: np.ndarray,
    x0: np.ndarray,
    cost: CostSpec,
    config: Optional[S0Config] = None,
    rng: Optional[np.random.Generator] = None,
    initial_gain: Optional[np.ndarray] = None,
) -> S0Run:
    """
    Algorithm behind s0_solve, over a stack of state matrices sharing G and x0.

    K starts at ``initial_gain`` when given; C and D always start random.
    """
    config = config or S0Config()
    rng = rng if rng is not None else np.random.default_rng()
    started = time.perf_counter()
    n, m = F_stack.shape[1], G.shape[1]
    solver = _AlternatingSolver(F_stack, G, x0, cost, config)

    K = config.init_scale * rng.standard_normal((m, n))
    if initial_gain is not None:
        K = np.array(initial_gain, dtype=float).reshape(m, n)
    C = config.init_scale * rng.standard_normal((n, n))
    D = config.init_scale * rng.standard_normal((m, n))

    certificate: Optional[LmiCertificate] = None
    c2: Optional[C2Result] = None
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, config.max_outer + 1):
        K_new = solver.step_c1(K, C, D)
        c2 = solver.step_c2(K_new, certificate)
        certificate = c2.certificate
        C, D = certificate.C, certificate.D

        history.append(solver.evaluate(K_new, C, D).objective)
        change = float(np.linalg.norm(K_new - K, "fro"))
        K = K_new
        logger.debug(
            "S0 outer iteration",
            extra={"iteration": iterations, "method": Method.S0.value},
        )
        if change < config.tol:
            converged = True
            break

    fallback = False
    if not solver.stabilizes(K) and certificate is not None:
        try:
            K = certificate.gain()
            fallback = True
        except SingularMatrixError:
            logger.warning("certificate gain unavailable; keeping last iterate")

    final = solver.evaluate(K, C, D)
    solution = StabilizedSolution(
        K=K,
        method=Method.S0,
        rho_closed=solver.max_rho(K),
        J=final.value,
        objective=final.objective,
        iterations=iterations,
        wall_time_s=time.perf_counter() - started,
        converged=converged,
        certificate=certificate,
        diagnostics={
            "objective_history": history,
            "fallback_to_certificate": fallback,
            "c2_residual": c2.residual if c2 is not None else None,
            "c2_exact": c2.exact if c2 is not None else False,
        },
    )
    binding = frozenset(c2.binding) if c2 is not None else frozenset()
    return S0Run(solution=solution, active=frozenset(solver.active), binding=binding)


def s0_solve(
    system: LtiSystem,
    cost: CostSpec,
    config: Optional[S0Config] = None,
    rng: Optional[np.random.Generator] = None,
) -> StabilizedSolution:
    cost.check_compatible(system)
    return run_s0(system.F[None, :, :], system.G, system.x0, cost, config, rng).solution
