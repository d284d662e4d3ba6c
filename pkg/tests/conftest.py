"""
Pytest configuration and fixtures for the LQR scenario bench tests

This module provides reusable fixtures for testing including:
- Small hand-checkable systems and costs
- The non-detectable benchmark system
- Seeded random-system factories
- Reduced solver budgets for fast unit runs
- A mocked registry for solver failures
"""

from typing import Callable, Tuple

import numpy as np
import pytest

from src.core.exceptions import ConvergenceError
from src.models.schemas import (
    CostSpec,
    ExperimentConfig,
    LtiSystem,
    NelderMeadConfig,
    S0Config,
)
from src.services.experiment_service import nondetectable_problem
from src.utils.matrix_kernel import spectral_radius


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator shared by a single test"""
    return np.random.default_rng(12345)


@pytest.fixture
def scalar_system() -> LtiSystem:
    """F = G = x0 = 1"""
    return LtiSystem(F=[[1.0]], G=[[1.0]], x0=[1.0])


@pytest.fixture
def scalar_cost() -> CostSpec:
    """Q = R = S = 1 over two steps"""
    return CostSpec(Q=[[1.0]], R=[[1.0]], S=[[1.0]], T=2)


@pytest.fixture
def unstable_scalar() -> Tuple[LtiSystem, CostSpec]:
    """F = 2, G = Q = R = S = x0 = 1, T = 8"""
    return (
        LtiSystem(F=[[2.0]], G=[[1.0]], x0=[1.0]),
        CostSpec(Q=[[1.0]], R=[[1.0]], S=[[1.0]], T=8),
    )


@pytest.fixture
def nondetectable() -> Tuple[LtiSystem, CostSpec]:
    """F = diag(2, 1), G = [1; 1], Q = diag(1, 0), S = I"""
    return nondetectable_problem()


def _random_system(rng: np.random.Generator, n: int, m: int, T: int, rho: float = 0.9):
    F = rng.uniform(-1.0, 1.0, size=(n, n))
    radius = spectral_radius(F)
    if radius > 0:
        F = F * (rho / radius)
    G = rng.uniform(-1.0, 1.0, size=(n, m))
    x0 = rng.standard_normal(n)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((m, m))
    Z = rng.standard_normal((n, n))
    cost = CostSpec(Q=A @ A.T, R=B @ B.T + 0.5 * np.eye(m), S=Z @ Z.T, T=T)
    return LtiSystem(F=F, G=G, x0=x0), cost


@pytest.fixture
def random_problem() -> Callable[..., Tuple[LtiSystem, CostSpec]]:
    """
    Factory for random instances: F uniform in [-1, 1] rescaled to a target
    spectral radius, G uniform in [-1, 1], random PSD weights with R > 0
    """
    return _random_system


@pytest.fixture
def fast_s0_config() -> S0Config:
    """S0 budget small enough for unit tests"""
    return S0Config(max_outer=8, lbfgs_max_iter=200, newton_max_iter=30)


@pytest.fixture
def fast_nm_config() -> NelderMeadConfig:
    """Nelder-Mead budget small enough for unit tests"""
    return NelderMeadConfig(max_eval_factor=300, restarts=1)


@pytest.fixture
def failing_registry(mocker):
    """Registry whose solvers always raise ConvergenceError"""
    solver = mocker.MagicMock()
    solver.robust = True
    solver.solve.side_effect = ConvergenceError("stalled", {"iteration": 3})
    registry = mocker.MagicMock()
    registry.get_solver.return_value = solver
    return registry


@pytest.fixture
def experiment_config() -> Callable[..., ExperimentConfig]:
    """Factory for small serial experiment configs"""

    def make(**overrides) -> ExperimentConfig:
        data = {
            "kind": "montecarlo",
            "trials": 2,
            "seed": 7,
            "max_workers": 1,
            "methods": ["classic", "sinf"],
        }
        data.update(overrides)
        return ExperimentConfig.model_validate(data)

    return make
