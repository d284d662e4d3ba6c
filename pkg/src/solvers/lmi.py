"""
Lyapunov LMI certificates and the log-barrier solver behind them.

For every state matrix F_i of a scenario stack the constraint is

    [[P,             F_i C + G D     ],
     [(F_i C + G D)', C + C' - P     ]] - xi I  >  0

over symmetric P, square C and D (m x n). A feasible point certifies that
F_i + G D C^-1 is Schur stable for every i. The shift xi fixes the scale, so
P is parameterized freely. Barrier subproblems stay bounded through a ball
|y| < r whose radius is BARRIER_BALL_RADIUS times the size of the start point.

Start points come from Lyapunov certificates of the closed loops F_i + G K
with C = P and D = K P; the phase-one program is the fallback.
"""

import logging
from typing import Callable, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg

from src.core.constants import (
    ARMIJO_C,
    BACKTRACK_FACTOR,
    BARRIER_BALL_RADIUS,
    STABILITY_EPS,
)
from src.core.exceptions import ConvergenceError, InfeasibleError, ValidationError
from src.models.schemas import LmiCertificate, S0Config
from src.utils.matrix_kernel import as_matrix, is_psd, spectral_radius, unvec

logger = logging.getLogger(__name__)

_REGULARIZATION = 1e-12
_MAX_BACKTRACKS = 60
_BINDING_SHARE = 1e-3
_JOINT_MAX_ITER = 500
_JOINT_BLOWUP = 1e12


class AffineLmi(NamedTuple):
    """A(y) = A0 + sum_j y_j A[j], one (s x s) block per scenario."""

    A0: np.ndarray
    """(N, s, s)"""
    A: np.ndarray
    """(k, N, s, s)"""
    radius: float = BARRIER_BALL_RADIUS

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.A0 + np.tensordot(y, self.A, axes=1)

    def around(self, y0: np.ndarray) -> "AffineLmi":
        """Same LMI with the ball radius scaled to the start point."""
        return self._replace(radius=BARRIER_BALL_RADIUS * max(1.0, float(np.linalg.norm(y0))))


class BarrierResult(NamedTuple):
    y: np.ndarray
    newton_steps: int
    stages: int
    converged: bool
    stopped_early: bool
    binding_share: np.ndarray
    """Per-block share of the barrier dual tr(A_i^-1) at the final iterate"""


class C2Result(NamedTuple):
    certificate: LmiCertificate
    residual: float
    exact: bool
    """True when D = K C holds exactly"""
    newton_steps: int
    converged: bool
    binding: Tuple[int, ...]
    """Scenario blocks whose LMI carries the barrier dual"""


class _Layout(NamedTuple):
    n: int
    m: int
    n_p: int
    n_c: int
    n_d: int

    @property
    def size(self) -> int:
        return self.n_p + self.n_c + self.n_d


# --- parameterization -------------------------------------------------------


def _p_basis(n: int) -> List[np.ndarray]:
    """Symmetric basis: E_ii, then E_ij + E_ji for i < j."""
    basis = []
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        basis.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def _p_coordinates(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    return np.concatenate([np.diag(P), P[np.triu_indices(n, k=1)]])


def _decode(y: np.ndarray, layout: _Layout, fixed_gain: Optional[np.ndarray]):
    n, m = layout.n, layout.m
    P = np.zeros((n, n))
    for coef, E in zip(y[: layout.n_p], _p_basis(n)):
        P = P + coef * E
    C = unvec(y[layout.n_p : layout.n_p + layout.n_c], n, n)
    if fixed_gain is not None:
        D = fixed_gain @ C
    else:
        D = unvec(y[layout.n_p + layout.n_c : layout.size], m, n)
    return 0.5 * (P + P.T), C, D


def _encode(P: np.ndarray, C: np.ndarray, D: Optional[np.ndarray]) -> np.ndarray:
    parts = [_p_coordinates(P), C.reshape(-1, order="F")]
    if D is not None:
        parts.append(D.reshape(-1, order="F"))
    return np.concatenate(parts)


def _assemble(
    F_stack: np.ndarray, G: np.ndarray, xi: float, fixed_gain: Optional[np.ndarray] = None
) -> Tuple[AffineLmi, _Layout]:
    """Build the affine LMI in y = [svec(P), vec(C), vec(D)]; D is dropped when D = K C."""
    N, n, _ = F_stack.shape
    m = G.shape[1]
    s = 2 * n
    layout = _Layout(
        n=n,
        m=m,
        n_p=n * (n + 1) // 2,
        n_c=n * n,
        n_d=0 if fixed_gain is not None else m * n,
    )

    A0 = np.broadcast_to(-xi * np.eye(s), (N, s, s)).copy()

    A = np.zeros((layout.size, N, s, s))
    for j, E in enumerate(_p_basis(n)):
        A[j, :, :n, :n] = E
        A[j, :, n:, n:] = -E

    # C enters the off-diagonal block through F_i (or F_i + G K when D = K C)
    F_eff = F_stack if fixed_gain is None else F_stack + (G @ fixed_gain)[None, :, :]
    for b in range(n):
        for a in range(n):
            j = layout.n_p + a + b * n
            off = np.zeros((N, n, n))
            off[:, :, b] = F_eff[:, :, a]
            A[j, :, :n, n:] = off
            A[j, :, n:, :n] = off.transpose(0, 2, 1)
            A[j, :, n + a, n + b] += 1.0
            A[j, :, n + b, n + a] += 1.0

    if fixed_gain is None:
        for b in range(n):
            for a in range(m):
                j = layout.n_p + layout.n_c + a + b * m
                off = np.zeros((n, n))
                off[:, b] = G[:, a]
                A[j, :, :n, n:] = off
                A[j, :, n:, :n] = off.T

    return AffineLmi(A0=A0, A=A), layout


# --- barrier Newton ----------------------------------------------------------


def _log_barrier(lmi: AffineLmi, y: np.ndarray) -> Optional[float]:
    """-log det A(y) - log(r^2 - |y|^2), or None outside the domain."""
    slack = lmi.radius**2 - float(y @ y)
    if slack <= 0:
        return None
    try:
        L = np.linalg.cholesky(lmi.value(y))
    except np.linalg.LinAlgError:
        return None
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)))
    return float(-logdet - np.log(slack))


def _dual_share(W: np.ndarray) -> np.ndarray:
    dual = np.trace(W, axis1=1, axis2=2)
    return dual / max(float(np.sum(dual)), 1e-300)


def _barrier_derivatives(lmi: AffineLmi, y: np.ndarray):
    Z = lmi.value(y)
    W = np.linalg.inv(Z)
    V = np.einsum("nab,knbc->knac", W, lmi.A)
    k = V.shape[0]
    grad = -np.einsum("knaa->k", V)
    flat = V.reshape(k, -1)
    flat_t = V.transpose(0, 1, 3, 2).reshape(k, -1)
    hess = flat @ flat_t.T

    slack = lmi.radius**2 - float(y @ y)
    grad = grad + 2.0 * y / slack
    hess = hess + 2.0 * np.eye(k) / slack + 4.0 * np.outer(y, y) / slack**2
    return grad, 0.5 * (hess + hess.T), _dual_share(W)


def barrier_minimize(
    lmi: AffineLmi,
    H: np.ndarray,
    g: np.ndarray,
    y0: np.ndarray,
    config: S0Config,
    stop: Optional[Callable[[np.ndarray], bool]] = None,
) -> BarrierResult:
    """
    Minimize 1/2 y'Hy + g'y subject to A(y) > 0 along the central path.

    Each stage minimizes t*f(y) - log det A(y) - log(r^2 - |y|^2) with t = 1/mu by
    damped Newton; mu decreases geometrically from barrier_mu_start to
    barrier_mu_end. ``stop`` is checked after every accepted step.
    """
    y = np.array(y0, dtype=float)
    if _log_barrier(lmi, y) is None:
        raise ValidationError("barrier start point is not strictly feasible")

    def f(z: np.ndarray) -> float:
        return float(0.5 * z @ H @ z + g @ z)

    mu = config.barrier_mu_start
    steps = 0
    stages = 0
    converged = True
    share = np.full(lmi.A0.shape[0], 1.0 / lmi.A0.shape[0])

    while True:
        t = 1.0 / mu
        stage_done = False
        for _ in range(config.newton_max_iter):
            grad_b, hess_b, share = _barrier_derivatives(lmi, y)
            grad = t * (H @ y + g) + grad_b
            hess = t * H + hess_b + _REGULARIZATION * np.eye(y.size)
            try:
                dy = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(hess), grad)
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                dy = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement_sq = float(-grad @ dy)
            if not np.isfinite(decrement_sq):
                raise ConvergenceError(
                    "barrier Newton step is not finite",
                    diagnostics={"mu": mu, "y": y.tolist(), "newton_steps": steps},
                )
            if decrement_sq / 2.0 <= config.newton_tol:
                stage_done = True
                break

            phi = t * f(y) + _log_barrier(lmi, y)
            alpha = 1.0
            accepted = False
            for _ in range(_MAX_BACKTRACKS):
                trial = y + alpha * dy
                barrier = _log_barrier(lmi, trial)
                if barrier is not None and t * f(trial) + barrier <= phi + ARMIJO_C * alpha * (
                    grad @ dy
                ):
                    accepted = True
                    break
                alpha *= BACKTRACK_FACTOR
            if not accepted:
                # no descent left at machine precision
                stage_done = True
                break

            y = trial
            steps += 1
            if stop is not None and stop(y):
                return BarrierResult(y, steps, stages + 1, converged, True, share)

        if not stage_done:
            converged = False
            logger.debug("barrier stage hit the Newton limit", extra={"iteration": stages})
        stages += 1
        if mu <= config.barrier_mu_end:
            break
        mu = max(mu * config.barrier_mu_factor, config.barrier_mu_end)

    return BarrierResult(y, steps, stages, converged, False, share)


# --- feasibility --------------------------------------------------------------


def _phase_one(
    lmi: AffineLmi, y0: np.ndarray, config: S0Config, stop_when_feasible: bool
) -> Tuple[np.ndarray, float, BarrierResult]:
    """Minimize s subject to A(y) + s I > 0; returns (y, s, result)."""
    N, s_dim, _ = lmi.A0.shape
    k = lmi.A.shape[0]
    A_aug = np.concatenate([lmi.A, np.broadcast_to(np.eye(s_dim), (1, N, s_dim, s_dim))], axis=0)

    lam_min = float(np.min(np.linalg.eigvalsh(lmi.value(y0))))
    s0 = max(0.0, -lam_min) + 1.0
    z0 = np.concatenate([y0, [s0]])
    augmented = AffineLmi(A0=lmi.A0, A=A_aug).around(z0)
    g = np.zeros(k + 1)
    g[-1] = 1.0

    stop = (lambda z: z[-1] < 0.0) if stop_when_feasible else None
    result = barrier_minimize(augmented, np.zeros((k + 1, k + 1)), g, z0, config, stop=stop)
    return result.y[:k], float(result.y[-1]), result


def _stack(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    return F[None, :, :] if F.ndim == 2 else F


def _start_point(layout: _Layout, fixed_gain: Optional[np.ndarray]) -> np.ndarray:
    n = layout.n
    D = None if fixed_gain is not None else np.zeros((layout.m, n))
    return _encode(np.eye(n), np.eye(n), D)


def _joint_lyapunov(closed: np.ndarray) -> Optional[np.ndarray]:
    """Fixed point of P = I + sum_i A_i P A_i', so that P - A_i P A_i' >= I for every i."""
    n = closed.shape[1]
    P = np.eye(n)
    for _ in range(_JOINT_MAX_ITER):
        P_next = np.eye(n) + np.einsum("nij,jk,nlk->il", closed, P, closed)
        size = float(np.linalg.norm(P_next))
        if not np.isfinite(size) or size > _JOINT_BLOWUP:
            return None
        if np.linalg.norm(P_next - P) <= 1e-12 * (1.0 + size):
            return 0.5 * (P_next + P_next.T)
        P = P_next
    return None


def _lyapunov_candidates(closed: np.ndarray) -> Iterator[np.ndarray]:
    joint = _joint_lyapunov(closed)
    if joint is not None:
        yield joint
    rhos = [spectral_radius(A_i) for A_i in closed]
    worst = closed[int(np.argmax(rhos))]
    if max(rhos) < 1.0:
        # P = A P A' + I for the slowest closed loop
        P = scipy.linalg.solve_discrete_lyapunov(worst, np.eye(closed.shape[1]))
        yield 0.5 * (P + P.T)


def _lyapunov_start(
    lmi: AffineLmi,
    layout: _Layout,
    F_stack: np.ndarray,
    G: np.ndarray,
    K: np.ndarray,
    fixed_gain: Optional[np.ndarray],
) -> Optional[np.ndarray]:
    """
    Strictly feasible y with C = P, D = K P from a Lyapunov certificate of the
    closed loops F_i + G K, scaled so the shifted LMI has smallest eigenvalue 1.
    """
    closed = F_stack + (G @ K)[None, :, :]
    if not np.all(np.isfinite(closed)):
        return None
    for P in _lyapunov_candidates(closed):
        y = _encode(P, P, None if fixed_gain is not None else K @ P)
        unshifted = float(np.min(np.linalg.eigvalsh(lmi.value(y)))) - float(lmi.A0[0, 0, 0])
        if not np.isfinite(unshifted) or unshifted <= 0.0:
            continue
        y = y * ((1.0 - float(lmi.A0[0, 0, 0])) / unshifted)
        if float(np.min(np.linalg.eigvalsh(lmi.value(y)))) > 0.0:
            return y
    return None


def lmi_matrix(F, G, P, C, D) -> np.ndarray:
    """The 2n x 2n block matrix of the Lyapunov LMI for a single F (no shift)."""
    F, G = as_matrix(F, "F"), as_matrix(G, "G")
    off = F @ C + G @ D
    return np.block([[P, off], [off.T, C + C.T - P]])


def verify_certificate(certificate: LmiCertificate, F, G) -> bool:
    """True when the shifted LMI holds for every state matrix in F."""
    return all(
        is_psd(lmi_matrix(F_i, G, certificate.P, certificate.C, certificate.D), certificate.xi).is_psd
        for F_i in _stack(F)
    )


def _exact_search(
    F_stack: np.ndarray, G: np.ndarray, K: np.ndarray, xi: float, config: S0Config
) -> Optional[LmiCertificate]:
    if K.shape != (G.shape[1], F_stack.shape[1]):
        raise ValidationError(f"K must have shape {(G.shape[1], F_stack.shape[1])}")

    lmi, layout = _assemble(F_stack, G, xi, fixed_gain=K)
    y = _lyapunov_start(lmi, layout, F_stack, G, K, fixed_gain=K)
    if y is None:
        y, s, result = _phase_one(lmi, _start_point(layout, K), config, stop_when_feasible=True)
        if s >= 0.0:
            if not result.converged:
                raise ConvergenceError(
                    "LMI phase one stopped before deciding feasibility",
                    diagnostics={"s": s, "newton_steps": result.newton_steps},
                )
            logger.debug("no exact LMI representation", extra={"scenario_count": F_stack.shape[0]})
            return None
    P, C, D = _decode(y, layout, K)
    return LmiCertificate(P=P, C=C, D=D, xi=xi)


def exact_certificate(
    F, G, K, xi: float = 1e-5, config: Optional[S0Config] = None
) -> Optional[LmiCertificate]:
    """
    Search (P, C) with D = K C for every F in the stack.

    Returns None when phase one converges with a nonnegative optimum, i.e. no
    common certificate with margin xi exists. Raises ConvergenceError when
    phase one stops on its Newton limit first.
    """
    config = config or S0Config(xi=xi)
    return _exact_search(_stack(F), as_matrix(G, "G"), as_matrix(K, "K"), xi, config)


def lyapunov_lmi_check(
    F, G, K, xi: float = 1e-5, config: Optional[S0Config] = None
) -> Optional[LmiCertificate]:
    """
    Certificate that u_t = K x_t stabilizes x_{t+1} = F x_t + G u_t, or None.

    None is the infeasibility verdict; numerical failure raises ConvergenceError.
    """
    certificate = exact_certificate(F, G, K, xi, config)
    if certificate is not None and not verify_certificate(certificate, F, G):
        raise ConvergenceError("phase-one iterate fails the LMI on verification")
    return certificate


def _free_start(
    lmi: AffineLmi,
    layout: _Layout,
    F_stack: np.ndarray,
    G: np.ndarray,
    K: np.ndarray,
    config: S0Config,
    warm_start: Optional[LmiCertificate],
) -> np.ndarray:
    if warm_start is not None:
        candidate = _encode(warm_start.P, warm_start.C, warm_start.D)
        if float(np.min(np.linalg.eigvalsh(lmi.value(candidate)))) > 0.0:
            return candidate

    mean_gain = -np.linalg.pinv(G) @ F_stack.mean(axis=0)
    for gain in (K, mean_gain):
        y = _lyapunov_start(lmi, layout, F_stack, G, gain, fixed_gain=None)
        if y is not None:
            return y

    y, s, result = _phase_one(lmi, _start_point(layout, None), config, stop_when_feasible=True)
    if s < 0.0:
        return y
    diagnostics = {"s": s, "newton_steps": result.newton_steps}
    if result.converged:
        logger.debug("LMI phase one converged above zero", extra={"iteration": result.newton_steps})
        raise InfeasibleError("no common Lyapunov certificate exists for the scenario stack")
    raise ConvergenceError("no strictly feasible LMI point found with D free", diagnostics)


def c2_solve(
    K,
    F,
    G,
    xi: float = 1e-5,
    config: Optional[S0Config] = None,
    warm_start: Optional[LmiCertificate] = None,
) -> C2Result:
    """
    Solve min_{P,C,D} |K C - D|_F^2 subject to the shifted LMI for every F.

    When K already stabilizes every F, an exact representation D = K C is tried
    first and, if found, returned with residual 0 and no binding block.
    """
    config = config or S0Config(xi=xi)
    F_stack = _stack(F)
    G = as_matrix(G, "G")
    K = as_matrix(K, "K")
    n, m = F_stack.shape[1], G.shape[1]
    if K.shape != (m, n):
        raise ValidationError(f"K must have shape {(m, n)}, got {K.shape}")

    if all(spectral_radius(F_i + G @ K) < 1.0 - STABILITY_EPS for F_i in F_stack):
        try:
            certificate = _exact_search(F_stack, G, K, xi, config)
        except ConvergenceError as e:
            logger.debug(f"exact representation undecided: {e}")
            certificate = None
        if certificate is not None:
            return C2Result(certificate, 0.0, True, 0, True, ())

    lmi, layout = _assemble(F_stack, G, xi)
    y0 = _free_start(lmi, layout, F_stack, G, K, config, warm_start)
    lmi = lmi.around(y0)

    # |K C - D|_F^2 = |M y|^2 with vec(K C - D) = (I kron K) vec(C) - vec(D)
    M = np.zeros((m * n, layout.size))
    M[:, layout.n_p : layout.n_p + layout.n_c] = np.kron(np.eye(n), K)
    M[:, layout.n_p + layout.n_c :] = -np.eye(m * n)
    H = 2.0 * M.T @ M

    result = barrier_minimize(lmi, H, np.zeros(layout.size), y0, config)
    P, C, D = _decode(result.y, layout, None)
    certificate = LmiCertificate(P=P, C=C, D=D, xi=xi)
    residual = float(np.linalg.norm(K @ C - D, "fro"))
    binding = tuple(int(i) for i in np.flatnonzero(result.binding_share >= _BINDING_SHARE))

    if not result.converged:
        logger.warning(
            "LMI barrier stopped before every stage converged",
            extra={"iteration": result.newton_steps},
        )
    return C2Result(certificate, residual, False, result.newton_steps, result.converged, binding)
