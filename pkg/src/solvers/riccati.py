"""
Infinite-horizon Riccati machinery.

S-infinity uses the stabilizing ARE solution, which exists exactly when
(F, Q^1/2) is detectable. It is computed as the limit of the DRE started from
zero and then polished with Newton-Hewer steps.
"""

import logging
import time
from typing import Optional

import numpy as np
import scipy.linalg

from src.core.constants import (
    DETECTABILITY_MARGIN,
    HEWER_STEPS,
    PBH_RANK_TOL,
    RICCATI_MAX_ITER,
    RICCATI_TOL,
    STABILITY_EPS,
    Method,
)
from src.core.exceptions import ConvergenceError, NotDetectableError
from src.models.schemas import AreSolution, CostSpec, LtiSystem, StabilizedSolution
from src.solvers.lqr import dre_step, rollout
from src.utils.matrix_kernel import as_matrix, solve_linear, spectral_radius, symmetrize

logger = logging.getLogger(__name__)


def psd_sqrt(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(symmetrize(Q))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def is_detectable(F, Q) -> bool:
    """PBH test: rank [F - sigma I; Q^1/2] = n for every eigenvalue with |sigma| >= 1."""
    F = as_matrix(F, "F")
    n = F.shape[0]
    root = psd_sqrt(as_matrix(Q, "Q"))
    scale = max(1.0, float(np.linalg.norm(F, 2)), float(np.linalg.norm(root, 2)))
    for sigma in scipy.linalg.eigvals(F):
        if abs(sigma) < 1.0 - DETECTABILITY_MARGIN:
            continue
        pencil = np.vstack([F - sigma * np.eye(n), root])
        singular = np.linalg.svd(pencil, compute_uv=False)
        if singular[-1] <= PBH_RANK_TOL * scale:
            logger.debug("unobservable eigenvalue", extra={"sigma": str(sigma)})
            return False
    return True


def riccati_gain(M: np.ndarray, F: np.ndarray, G: np.ndarray, R: np.ndarray) -> np.ndarray:
    return -solve_linear(R + G.T @ M @ G, G.T @ M @ F)


def are_residual(M, F, G, Q, R) -> float:
    M = as_matrix(M, "M")
    M_next, _ = dre_step(M, F, G, Q, R)
    return float(np.linalg.norm(M - M_next, "fro"))


def solve_are(F, G, Q, R) -> AreSolution:
    """
    Stabilizing ARE solution via DRE iteration from M = 0.

    Raises NotDetectableError when (F, Q^1/2) fails the PBH test and
    ConvergenceError when the iteration does not settle.
    """
    F, G, Q, R = (as_matrix(A, name) for A, name in ((F, "F"), (G, "G"), (Q, "Q"), (R, "R")))
    if not is_detectable(F, Q):
        raise NotDetectableError("(F, Q^1/2) is not detectable; no stabilizing ARE solution")

    n = F.shape[0]
    M = np.zeros((n, n))
    for iterations in range(1, RICCATI_MAX_ITER + 1):
        M_next, _ = dre_step(M, F, G, Q, R)
        change = float(np.linalg.norm(M_next - M, "fro"))
        M = M_next
        if change <= RICCATI_TOL * (1.0 + float(np.linalg.norm(M, "fro"))):
            break
    else:
        raise ConvergenceError(
            "DRE iteration did not reach its fixed point",
            diagnostics={"iterations": RICCATI_MAX_ITER, "last_change": change},
        )

    K = riccati_gain(M, F, G, R)
    residual = are_residual(M, F, G, Q, R)
    for _ in range(HEWER_STEPS):
        F_K = F + G @ K
        if spectral_radius(F_K) >= 1.0:
            break
        M_new = symmetrize(scipy.linalg.solve_discrete_lyapunov(F_K.T, Q + K.T @ R @ K))
        new_residual = are_residual(M_new, F, G, Q, R)
        if not np.isfinite(new_residual) or new_residual >= residual:
            break
        M, residual = M_new, new_residual
        K = riccati_gain(M, F, G, R)

    return AreSolution(M=M, K=K, residual=residual, iterations=iterations)


def sinf_solve(system: LtiSystem, cost: CostSpec) -> StabilizedSolution:
    """Constant gain of the stabilizing ARE solution; raises NotDetectableError."""
    cost.check_compatible(system)
    started = time.perf_counter()
    are = solve_are(system.F, system.G, cost.Q, cost.R)
    rho = spectral_radius(system.F + system.G @ are.K)
    if rho >= 1.0 - STABILITY_EPS:
        logger.warning("ARE gain does not stabilize", extra={"method": Method.SINF.value})
    J = rollout(system, cost, are.K).cost
    return StabilizedSolution(
        K=are.K,
        method=Method.SINF,
        rho_closed=rho,
        J=J,
        objective=J,
        iterations=are.iterations,
        wall_time_s=time.perf_counter() - started,
        converged=True,
        M_inf=are.M,
        diagnostics={"are_residual": are.residual},
    )


def feedback_from_L(L, F, G, R, LtL: Optional[np.ndarray] = None) -> np.ndarray:
    """
    K = -(R + G'L'LG)^-1 G'L'L F.

    F may be a stack (N, n, n); the gains then come back as (N, m, n) from a
    single factorization, since the left-hand side does not depend on F.
    """
    if LtL is None:
        L = np.asarray(L, dtype=float)
        LtL = L.T @ L
    G = np.asarray(G, dtype=float)
    F = np.asarray(F, dtype=float)
    H = R + G.T @ LtL @ G
    if F.ndim == 2:
        return -solve_linear(H, G.T @ LtL @ F)
    N, n, _ = F.shape
    rhs = np.einsum("ij,njk->ink", G.T @ LtL, F).reshape(G.shape[1], N * n)
    return -solve_linear(H, rhs).reshape(G.shape[1], N, n).transpose(1, 0, 2)
