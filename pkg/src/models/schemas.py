from typing import Annotated, Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    WithJsonSchema,
    field_validator,
    model_validator,
)

from src.config import settings
from src.core.constants import (
    BARRIER_MU_END,
    BARRIER_MU_FACTOR,
    BARRIER_MU_START,
    BARRIER_NEWTON_MAX_ITER,
    BARRIER_NEWTON_TOL,
    INIT_SCALE,
    NM_RESTARTS,
    R_DEFINITENESS_SHIFT,
    ExperimentKind,
    Method,
    OutputFormat,
    TrialStatus,
)
from src.core.exceptions import ValidationError
from src.utils.matrix_kernel import as_matrix, is_psd, solve_linear


def _frozen_array(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("array contains NaN or Inf")
    arr.flags.writeable = False
    return arr


def _frozen_matrix(value: Any) -> np.ndarray:
    return _frozen_array(as_matrix(value))


def _frozen_vector(value: Any) -> np.ndarray:
    arr = _frozen_array(value)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = _frozen_array(arr.ravel())
    if arr.ndim != 1:
        raise ValidationError(f"expected a vector, got shape {arr.shape}")
    return arr


_MATRIX_SCHEMA = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_VECTOR_SCHEMA = {"type": "array", "items": {"type": "number"}}
_TENSOR_SCHEMA = {"type": "array", "items": _MATRIX_SCHEMA}


def _to_list(arr: np.ndarray) -> list:
    return arr.tolist()


Matrix = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_matrix),
    PlainSerializer(_to_list, return_type=list),
    WithJsonSchema(_MATRIX_SCHEMA),
]
Vector = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_vector),
    PlainSerializer(_to_list, return_type=list),
    WithJsonSchema(_VECTOR_SCHEMA),
]
Tensor = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_array),
    PlainSerializer(_to_list, return_type=list),
    WithJsonSchema(_TENSOR_SCHEMA),
]


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")


# --- lqr-core ---------------------------------------------------------------


class LtiSystem(ArrayModel):
    """x_{t+1} = F x_t + G u_t started from x0."""

    F: Matrix
    G: Matrix
    x0: Vector

    @model_validator(mode="after")
    def _check_dimensions(self) -> "LtiSystem":
        n = self.F.shape[0]
        if self.F.shape != (n, n):
            raise ValidationError(f"F must be square, got {self.F.shape}")
        if self.G.shape[0] != n:
            raise ValidationError(f"G must have {n} rows, got {self.G.shape}")
        if self.x0.shape != (n,):
            raise ValidationError(f"x0 must have length {n}, got {self.x0.shape}")
        return self

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    def with_state_matrix(self, F: np.ndarray) -> "LtiSystem":
        return LtiSystem(F=F, G=self.G, x0=self.x0)


class CostSpec(ArrayModel):
    """Finite-horizon quadratic cost with Q, S >= 0 and R > 0."""

    Q: Matrix
    R: Matrix
    S: Matrix
    T: int = Field(gt=0)

    @field_validator("Q", "S")
    @classmethod
    def _semidefinite(cls, v: np.ndarray) -> np.ndarray:
        if not is_psd(v).is_psd:
            raise ValidationError("weight matrix must be positive semidefinite")
        return v

    @field_validator("R")
    @classmethod
    def _definite(cls, v: np.ndarray) -> np.ndarray:
        check = is_psd(v)
        if check.witness <= R_DEFINITENESS_SHIFT * max(1.0, float(np.linalg.norm(v, 2))):
            raise ValidationError("R must be positive definite")
        return v

    def check_compatible(self, system: LtiSystem) -> None:
        n, m = system.n, system.m
        if self.Q.shape != (n, n) or self.S.shape != (n, n):
            raise ValidationError(f"Q and S must be {n}x{n}")
        if self.R.shape != (m, m):
            raise ValidationError(f"R must be {m}x{m}")


class InputSequence(ArrayModel):
    u: Tensor
    """Shape (T, m); row t is u_t"""

    @field_validator("u")
    @classmethod
    def _two_dimensional(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2:
            raise ValidationError(f"input sequence must have shape (T, m), got {v.shape}")
        return v

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def stacked(self) -> np.ndarray:
        return self.u.reshape(-1)


class FeedbackSequence(ArrayModel):
    K: Tensor
    """Shape (T, m, n)"""
    M: Tensor
    """Shape (T + 1, n, n); M[T] == S"""

    @model_validator(mode="after")
    def _check_lengths(self) -> "FeedbackSequence":
        if self.K.ndim != 3 or self.M.ndim != 3 or self.M.shape[0] != self.K.shape[0] + 1:
            raise ValidationError("need T gains and T + 1 value matrices")
        return self

    @property
    def T(self) -> int:
        return self.K.shape[0]


class AdjointSequence(ArrayModel):
    lam: Tensor
    """Shape (T + 1, n); row t is the costate lambda_t"""


# --- stability --------------------------------------------------------------


class LmiCertificate(ArrayModel):
    P: Matrix
    C: Matrix
    D: Matrix
    xi: float = Field(gt=0)

    def gain(self) -> np.ndarray:
        """K = D C^-1."""
        return solve_linear(self.C.T, self.D.T).T


class S0Config(BaseModel):
    model_config = ConfigDict(extra="forbid")

    xi: float = Field(default_factory=lambda: settings.XI, gt=0)
    mu: float = Field(default_factory=lambda: settings.MU, gt=0)
    max_outer: int = Field(default_factory=lambda: settings.S0_MAX_OUTER, ge=1)
    tol: float = Field(default_factory=lambda: settings.S0_TOL, gt=0)
    lbfgs_memory: int = Field(default_factory=lambda: settings.LBFGS_MEMORY, ge=1)
    lbfgs_max_iter: int = Field(default_factory=lambda: settings.LBFGS_MAX_ITER, ge=1)
    barrier_mu_start: float = Field(default=BARRIER_MU_START, gt=0)
    barrier_mu_end: float = Field(default=BARRIER_MU_END, gt=0)
    barrier_mu_factor: float = Field(default=BARRIER_MU_FACTOR, gt=0, lt=1)
    newton_max_iter: int = Field(default=BARRIER_NEWTON_MAX_ITER, ge=1)
    newton_tol: float = Field(default=BARRIER_NEWTON_TOL, gt=0)
    init_scale: float = Field(default=INIT_SCALE, ge=0)


class NelderMeadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial_step: float = Field(default_factory=lambda: settings.NM_INITIAL_STEP, gt=0)
    max_eval_factor: int = Field(default_factory=lambda: settings.NM_MAX_EVAL_FACTOR, ge=1)
    restarts: int = Field(default=NM_RESTARTS, ge=0)
    xatol: float = Field(default=1e-8, gt=0)
    fatol: float = Field(default=1e-10, gt=0)
    init_scale: float = Field(default=INIT_SCALE, ge=0)


class StabilizedSolution(ArrayModel):
    K: Matrix
    method: Method
    rho_closed: float
    J: float
    """Finite-horizon cost; for robust solves, the worst case over scenarios"""
    objective: float
    iterations: int = 0
    wall_time_s: float = 0.0
    converged: bool = True
    certificate: Optional[LmiCertificate] = None
    M_inf: Optional[Matrix] = None
    L: Optional[Matrix] = None
    diagnostics: Dict[str, Any] = Field(default_factory=dict)


class AreSolution(ArrayModel):
    M: Matrix
    K: Matrix
    residual: float
    iterations: int


# --- scenario ---------------------------------------------------------------


class ScenarioSet(ArrayModel):
    F: Tensor
    """Shape (N, n, n)"""
    G: Matrix
    x0: Vector
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ScenarioSet":
        if self.F.ndim != 3 or self.F.shape[0] < 1 or self.F.shape[1] != self.F.shape[2]:
            raise ValidationError(f"F must have shape (N, n, n) with N >= 1, got {self.F.shape}")
        n = self.F.shape[1]
        if self.G.shape[0] != n or self.x0.shape != (n,):
            raise ValidationError("G and x0 must match the scenario dimension")
        return self

    @property
    def N(self) -> int:
        return self.F.shape[0]

    def system(self, i: int) -> LtiSystem:
        return LtiSystem(F=self.F[i], G=self.G, x0=self.x0)

    def subset(self, indices) -> "ScenarioSet":
        idx = [int(i) for i in indices]
        return ScenarioSet(F=self.F[idx], G=self.G, x0=self.x0, metadata=dict(self.metadata))

    @classmethod
    def from_system(cls, system: LtiSystem) -> "ScenarioSet":
        return cls(F=system.F[None, :, :], G=system.G, x0=system.x0)


class RobustnessBudget(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(gt=0, lt=1)
    beta: float = Field(gt=0, lt=1)
    d: int = Field(ge=1)


class SupportSubsample(BaseModel):
    model_config = ConfigDict(frozen=True)

    indices: Tuple[int, ...]
    cardinality: int
    epsilon: float
    n_effective: int
    """Number of distinct scenarios the bound is evaluated against"""


# --- leslie -----------------------------------------------------------------


class LeslieParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    nu: List[float]
    kappa: List[float]
    check_survival_range: bool = True
    """Perturbed scenarios disable this and may carry survival rates outside (0, 1)"""

    @model_validator(mode="after")
    def _check(self) -> "LeslieParams":
        if len(self.kappa) != len(self.nu) - 1:
            raise ValidationError("need n fecundities and n - 1 survival rates")
        if any(v < 0 for v in self.nu):
            raise ValidationError("fecundities must be nonnegative")
        if self.check_survival_range and any(not 0 < k < 1 for k in self.kappa):
            raise ValidationError("survival rates must lie in (0, 1)")
        return self

    @property
    def n(self) -> int:
        return len(self.nu)


class UncertaintySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: List[float]
    upper: List[float]

    @model_validator(mode="after")
    def _check(self) -> "UncertaintySpec":
        if len(self.lower) != len(self.upper):
            raise ValidationError("lower and upper bounds must have equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValidationError("lower bound exceeds upper bound")
        return self

    @classmethod
    def symmetric(cls, width: float, count: int) -> "UncertaintySpec":
        return cls(lower=[-width] * count, upper=[width] * count)


# --- bench-cli --------------------------------------------------------------


class LeslieSampling(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=5, ge=1)
    nu_range: Tuple[float, float] = (0.0, 4.0)
    kappa_range: Tuple[float, float] = (0.0, 1.0)


class ScenarioExperiment(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nominal: Optional[LeslieParams] = None
    uncertainty: Optional[UncertaintySpec] = None
    n_train: int = Field(default=50, ge=1)
    n_fresh: int = Field(default=100, ge=0)
    beta: float = Field(default=0.05, gt=0, lt=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    kind: ExperimentKind
    system: Optional[LtiSystem] = None
    cost: Optional[CostSpec] = None
    initial_state: Optional[List[float]] = None
    leslie: LeslieSampling = Field(default_factory=LeslieSampling)
    scenario: ScenarioExperiment = Field(default_factory=ScenarioExperiment)
    methods: List[Method] = Field(
        default_factory=lambda: [Method.S0, Method.S1, Method.S2, Method.SINF, Method.CLASSIC]
    )
    trials: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    s0: S0Config = Field(default_factory=S0Config)
    nelder_mead: NelderMeadConfig = Field(default_factory=NelderMeadConfig)
    unchanged_tol: float = Field(default_factory=lambda: settings.UNCHANGED_TOL, gt=0)
    support_value_tol: float = Field(default_factory=lambda: settings.SUPPORT_VALUE_TOL, gt=0)
    output: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV
    record_timing: bool = False
    max_workers: Optional[int] = Field(default=None, ge=1)

    @field_validator("methods")
    @classmethod
    def _unique_methods(cls, v: List[Method]) -> List[Method]:
        if not v:
            raise ValidationError("at least one method is required")
        return list(dict.fromkeys(v))


class TrialRecord(ArrayModel):
    trial: int
    method: Method
    rho_open: float
    rho_closed: Optional[float] = None
    J: Optional[float] = None
    J_star: float
    rel_gap: Optional[float] = None
    time_ms: Optional[float] = None
    converged: bool
    epsilon_posterior: Optional[float] = None
    status: TrialStatus = TrialStatus.OK
    gain: Optional[Matrix] = None
    state_matrix: Optional[Matrix] = None
    support_cardinality: Optional[int] = None
    fresh_stability_rate: Optional[float] = None

    @model_validator(mode="after")
    def _gap_nonnegative(self) -> "TrialRecord":
        if self.rel_gap is not None and self.rel_gap < -1e-8:
            raise ValidationError(f"relative gap {self.rel_gap} beats the optimum")
        return self


class SolveReport(ArrayModel):
    method: Method
    status: TrialStatus
    rho_open: float
    J_star: float
    solution: Optional[StabilizedSolution] = None
    rel_gap: Optional[float] = None
    message: Optional[str] = None


class MethodSummary(BaseModel):
    method: Method
    trials: int
    stabilized: int
    """Rows with status ok and rho_closed < 1"""
    not_detectable: int = 0
    failed: int = 0
    median_rel_gap: Optional[float] = None
    support_cardinality: Optional[int] = None
    """Largest support subsample seen across trials"""
    epsilon_posterior: Optional[float] = None
    fresh_stability_rate: Optional[float] = None
    """Mean over trials"""


class ExperimentSummary(BaseModel):
    kind: ExperimentKind
    trials: int
    open_loop_unstable_fraction: float
    methods: List[MethodSummary]
