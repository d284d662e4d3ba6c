"""
Finite-horizon LQR in its four equivalent formulations.

P1 eliminates the states and solves a dense QP in the stacked inputs. P2 keeps
states and inputs as joint variables under the dynamics constraint and solves the
KKT system. P3 is the backward difference Riccati sweep. P4 runs the Pontryagin
sweep that pairs the P3 gains with the costate lambda_t = -2 M_t x_t.

Arrays are indexed by time along axis 0: states (T + 1, n), inputs (T, m),
gains (T, m, n), costates (T + 1, n).
"""

import logging
from typing import Dict, List, NamedTuple, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from src.core.exceptions import SingularMatrixError, ValidationError
from src.models.schemas import (
    AdjointSequence,
    CostSpec,
    FeedbackSequence,
    InputSequence,
    LtiSystem,
)
from src.utils.matrix_kernel import solve_linear, symmetrize

logger = logging.getLogger(__name__)

Policy = Union[InputSequence, FeedbackSequence, np.ndarray]


class P2Blocks(NamedTuple):
    A1: np.ndarray
    A2: np.ndarray
    b: np.ndarray
    Q_bar: np.ndarray
    R_bar: np.ndarray


class P2Solution(NamedTuple):
    inputs: InputSequence
    states: np.ndarray
    multipliers: np.ndarray


class Rollout(NamedTuple):
    states: np.ndarray
    inputs: np.ndarray
    cost: float


def _validated(system: LtiSystem, cost: CostSpec) -> None:
    cost.check_compatible(system)


def _matrix_powers(F: np.ndarray, k_max: int) -> List[np.ndarray]:
    powers = [np.eye(F.shape[0])]
    for _ in range(k_max):
        powers.append(F @ powers[-1])
    return powers


def closed_loop(F: np.ndarray, G: np.ndarray, K: np.ndarray) -> np.ndarray:
    return F + G @ K


def build_p1(system: LtiSystem, cost: CostSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Dense QP min_u u'Bu + 2a'u over the stacked inputs u = [u_0; ...; u_{T-1}].

    With Phi_k = F^k G, block (p, q) of B is
    Phi_{T-1-p}' S Phi_{T-1-q} + [p == q] R + sum_{t=max(p,q)+1}^{T-1} Phi_{t-1-p}' Q Phi_{t-1-q}
    and block p of a is
    sum_{t=p+1}^{T-1} Phi_{t-1-p}' Q F^t x0 + Phi_{T-1-p}' S F^T x0.
    """
    _validated(system, cost)
    F, G, x0 = system.F, system.G, system.x0
    Q, R, S, T = cost.Q, cost.R, cost.S, cost.T
    m = system.m

    powers = _matrix_powers(F, T)
    phi = [P @ G for P in powers[:T]]
    free = [P @ x0 for P in powers]

    B = np.zeros((m * T, m * T))
    a = np.zeros(m * T)
    for p in range(T):
        rows = slice(p * m, (p + 1) * m)
        for q in range(p, T):
            block = phi[T - 1 - p].T @ S @ phi[T - 1 - q]
            if p == q:
                block = block + R
            for t in range(q + 1, T):
                block = block + phi[t - 1 - p].T @ Q @ phi[t - 1 - q]
            B[rows, q * m : (q + 1) * m] = block
            B[q * m : (q + 1) * m, rows] = block.T

        a_p = phi[T - 1 - p].T @ S @ free[T]
        for t in range(p + 1, T):
            a_p = a_p + phi[t - 1 - p].T @ Q @ free[t]
        a[rows] = a_p

    return symmetrize(B), a


def p1_constant(system: LtiSystem, cost: CostSpec) -> float:
    """Input-independent part of the cost, so that J(u) = u'Bu + 2a'u + c."""
    _validated(system, cost)
    free = [P @ system.x0 for P in _matrix_powers(system.F, cost.T)]
    c = sum(float(x @ cost.Q @ x) for x in free[: cost.T])
    return c + float(free[cost.T] @ cost.S @ free[cost.T])


def solve_p1(system: LtiSystem, cost: CostSpec) -> InputSequence:
    B, a = build_p1(system, cost)
    u = -solve_linear(B, a)
    return InputSequence(u=u.reshape(cost.T, system.m))


def build_p2(system: LtiSystem, cost: CostSpec) -> P2Blocks:
    """Constraint A1 x + A2 u = b encodes x_0 = x0 and x_{t+1} = F x_t + G u_t."""
    _validated(system, cost)
    n, m, T = system.n, system.m, cost.T

    A1 = np.eye(n * (T + 1))
    A2 = np.zeros((n * (T + 1), m * T))
    for t in range(T):
        A1[(t + 1) * n : (t + 2) * n, t * n : (t + 1) * n] = -system.F
        A2[(t + 1) * n : (t + 2) * n, t * m : (t + 1) * m] = -system.G

    b = np.zeros(n * (T + 1))
    b[:n] = system.x0
    Q_bar = scipy.linalg.block_diag(np.kron(np.eye(T), cost.Q), cost.S)
    R_bar = np.kron(np.eye(T), cost.R)
    return P2Blocks(A1=A1, A2=A2, b=b, Q_bar=Q_bar, R_bar=R_bar)


def solve_p2(system: LtiSystem, cost: CostSpec) -> P2Solution:
    """
    Solve the joint KKT system

        [2Q_bar   0      A1'] [x  ]   [0]
        [0        2R_bar A2'] [u  ] = [0]
        [A1       A2     0  ] [lam]   [b]

    as one sparse factorization.
    """
    blocks = build_p2(system, cost)
    n, m, T = system.n, system.m, cost.T
    nx, nu = n * (T + 1), m * T

    A1 = scipy.sparse.csc_matrix(blocks.A1)
    A2 = scipy.sparse.csc_matrix(blocks.A2)
    kkt = scipy.sparse.bmat(
        [
            [2.0 * scipy.sparse.csc_matrix(blocks.Q_bar), None, A1.T],
            [None, 2.0 * scipy.sparse.csc_matrix(blocks.R_bar), A2.T],
            [A1, A2, None],
        ],
        format="csc",
    )
    rhs = np.concatenate([np.zeros(nx + nu), blocks.b])
    try:
        sol = scipy.sparse.linalg.splu(kkt).solve(rhs)
    except RuntimeError as e:
        raise SingularMatrixError(f"P2 KKT system is singular: {e}") from e

    x = sol[:nx].reshape(T + 1, n)
    u = sol[nx : nx + nu].reshape(T, m)
    lam = sol[nx + nu :].reshape(T + 1, n)
    return P2Solution(inputs=InputSequence(u=u), states=x, multipliers=lam)


def p2_dense_solution(system: LtiSystem, cost: CostSpec) -> InputSequence:
    """
    Closed form u = (R_bar + A2' W A2)^-1 A2' W b with W = A1^-T Q_bar A1^-1.

    Cubic in T; kept as a cross-check for the sparse KKT solve.
    """
    blocks = build_p2(system, cost)
    A1_inv = solve_linear(blocks.A1, np.eye(blocks.A1.shape[0]))
    W = A1_inv.T @ blocks.Q_bar @ A1_inv
    lhs = blocks.R_bar + blocks.A2.T @ W @ blocks.A2
    u = solve_linear(lhs, blocks.A2.T @ W @ blocks.b)
    return InputSequence(u=u.reshape(cost.T, system.m))


def dre_step(
    M: np.ndarray, F: np.ndarray, G: np.ndarray, Q: np.ndarray, R: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """One backward Riccati step: returns (M_t, K_t) from M_{t+1}."""
    MG = M @ G
    H = R + G.T @ MG
    K = -solve_linear(H, MG.T @ F)
    M_new = Q + F.T @ M @ F + F.T @ MG @ K
    return symmetrize(M_new), K


def dre_sweep(system: LtiSystem, cost: CostSpec) -> FeedbackSequence:
    _validated(system, cost)
    n, m, T = system.n, system.m, cost.T
    M = np.empty((T + 1, n, n))
    K = np.empty((T, m, n))
    M[T] = cost.S
    for t in range(T - 1, -1, -1):
        M[t], K[t] = dre_step(M[t + 1], system.F, system.G, cost.Q, cost.R)
    return FeedbackSequence(K=K, M=M)


def optimal_cost(system: LtiSystem, cost: CostSpec) -> float:
    """Classic LQR optimum x0' M_0 x0."""
    M0 = dre_sweep(system, cost).M[0]
    return float(system.x0 @ M0 @ system.x0)


def solve_p4(system: LtiSystem, cost: CostSpec) -> Tuple[InputSequence, AdjointSequence]:
    sweep = dre_sweep(system, cost)
    n, m, T = system.n, system.m, cost.T
    x = np.empty((T + 1, n))
    u = np.empty((T, m))
    x[0] = system.x0
    for t in range(T):
        u[t] = sweep.K[t] @ x[t]
        x[t + 1] = system.F @ x[t] + system.G @ u[t]
    lam = -2.0 * np.einsum("tij,tj->ti", sweep.M, x)
    return InputSequence(u=u), AdjointSequence(lam=lam)


def pontryagin_residuals(
    system: LtiSystem,
    cost: CostSpec,
    states: np.ndarray,
    inputs: np.ndarray,
    costates: np.ndarray,
) -> Dict[str, float]:
    """Max-norm residual of each first-order optimality condition."""
    F, G = system.F, system.G
    x, u, lam = np.asarray(states), np.asarray(inputs), np.asarray(costates)
    dynamics = x[1:] - x[:-1] @ F.T - u @ G.T
    costate = lam[:-1] - (-2.0 * x[:-1] @ cost.Q + lam[1:] @ F)
    stationarity = 2.0 * u @ cost.R - lam[1:] @ G
    return {
        "initial": float(np.max(np.abs(x[0] - system.x0))),
        "dynamics": float(np.max(np.abs(dynamics), initial=0.0)),
        "costate": float(np.max(np.abs(costate), initial=0.0)),
        "terminal": float(np.max(np.abs(lam[-1] + 2.0 * cost.S @ x[-1]))),
        "stationarity": float(np.max(np.abs(stationarity), initial=0.0)),
    }


def trajectory_cost(states: np.ndarray, inputs: np.ndarray, cost: CostSpec) -> float:
    x, u = states, inputs
    stage = np.einsum("ti,ij,tj->", x[:-1], cost.Q, x[:-1])
    effort = np.einsum("ti,ij,tj->", u, cost.R, u)
    return float(stage + effort + x[-1] @ cost.S @ x[-1])


def _gain_schedule(policy: Policy, n: int, m: int, T: int) -> Union[np.ndarray, None]:
    """Per-step gains (T, m, n), or None for an open-loop input sequence."""
    if isinstance(policy, InputSequence):
        if policy.u.shape != (T, m):
            raise ValidationError(f"input sequence must have shape {(T, m)}, got {policy.u.shape}")
        return None
    if isinstance(policy, FeedbackSequence):
        if policy.K.shape != (T, m, n):
            raise ValidationError(f"gain sequence must have shape {(T, m, n)}")
        return policy.K
    K = np.asarray(policy, dtype=float)
    if K.shape != (m, n):
        raise ValidationError(f"constant gain must have shape {(m, n)}, got {K.shape}")
    return np.broadcast_to(K, (T, m, n))


def rollout(system: LtiSystem, cost: CostSpec, policy: Policy) -> Rollout:
    """
    Simulate the plant under an open-loop input sequence, a constant gain K
    (u_t = K x_t) or a time-varying feedback sequence, and evaluate the cost.
    """
    _validated(system, cost)
    n, m, T = system.n, system.m, cost.T
    gains = _gain_schedule(policy, n, m, T)

    x = np.empty((T + 1, n))
    u = np.empty((T, m))
    x[0] = system.x0
    for t in range(T):
        u[t] = policy.u[t] if gains is None else gains[t] @ x[t]
        x[t + 1] = system.F @ x[t] + system.G @ u[t]
    return Rollout(states=x, inputs=u, cost=trajectory_cost(x, u, cost))
