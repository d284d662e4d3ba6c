"""Tests for detectability, the ARE and the L feedback map"""

import numpy as np
import pytest
from scipy.stats import ortho_group

from src.core.constants import Method
from src.core.exceptions import NotDetectableError
from src.models.schemas import CostSpec, LtiSystem
from src.solvers.riccati import (
    are_residual,
    feedback_from_L,
    is_detectable,
    psd_sqrt,
    sinf_solve,
    solve_are,
)
from src.utils.matrix_kernel import spectral_radius

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


@pytest.mark.unit
class TestDetectability:
    """Test suite for the PBH detectability test"""

    def test_unobservable_unit_mode(self):
        """F = diag(2, 1), Q = diag(1, 0) is not detectable"""
        assert not is_detectable(np.diag([2.0, 1.0]), np.diag([1.0, 0.0]))

    def test_stable_plant_always_detectable(self):
        """Every mode inside the unit disc: Q = 0 is fine"""
        assert is_detectable(np.diag([0.5, -0.3]), np.zeros((2, 2)))

    def test_observed_unstable_mode(self):
        """An unstable mode seen by Q is detectable"""
        assert is_detectable(np.diag([2.0, 0.5]), np.diag([1.0, 0.0]))

    def test_unobserved_unstable_mode(self):
        """An unstable mode hidden from Q is not"""
        assert not is_detectable(np.diag([0.5, 2.0]), np.diag([1.0, 0.0]))

    def test_psd_sqrt(self):
        """Q^1/2 squares back to Q"""
        A = np.random.default_rng(0).standard_normal((3, 3))
        Q = A @ A.T
        root = psd_sqrt(Q)
        np.testing.assert_allclose(root @ root, Q, atol=1e-10)


@pytest.mark.unit
class TestAre:
    """Test suite for the stabilizing ARE solution"""

    def test_scalar_golden_ratio(self):
        """F = G = Q = R = 1 gives M = (1 + sqrt 5)/2 and K = -0.618"""
        are = solve_are([[1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert are.M[0, 0] == pytest.approx(GOLDEN, abs=1e-8)
        assert are.K[0, 0] == pytest.approx(-GOLDEN / (1.0 + GOLDEN), abs=1e-8)
        assert 1.0 + are.K[0, 0] == pytest.approx(0.382, abs=1e-3)

    def test_nondetectable_raises(self):
        """The non-detectable pair has no stabilizing solution"""
        with pytest.raises(NotDetectableError):
            solve_are(np.diag([2.0, 1.0]), [[1.0], [1.0]], np.diag([1.0, 0.0]), [[1.0]])

    def test_stable_plant_zero_weight(self):
        """F stable, Q = 0 gives M = 0 and K = 0"""
        are = solve_are(np.diag([0.5, 0.2]), np.eye(2), np.zeros((2, 2)), np.eye(2))
        np.testing.assert_allclose(are.M, 0.0, atol=1e-12)
        np.testing.assert_allclose(are.K, 0.0, atol=1e-12)

    def test_residual_and_stability(self, random_problem):
        """Random detectable problems: residual <= 1e-8 and a Schur closed loop"""
        rng = np.random.default_rng(17)
        for _ in range(10):
            system, cost = random_problem(rng, n=3, m=2, T=5, rho=1.4)
            are = solve_are(system.F, system.G, cost.Q, cost.R)
            assert are.residual <= 1e-8 * max(1.0, np.linalg.norm(are.M))
            assert are_residual(are.M, system.F, system.G, cost.Q, cost.R) == pytest.approx(
                are.residual
            )
            assert spectral_radius(system.F + system.G @ are.K) < 1.0


@pytest.mark.unit
class TestSinfSolve:
    """Test suite for sinf_solve"""

    def test_scalar(self, scalar_system, scalar_cost):
        """The constant ARE gain on the scalar problem"""
        solution = sinf_solve(scalar_system, scalar_cost)
        assert solution.method == Method.SINF
        assert solution.K[0, 0] == pytest.approx(-0.618, abs=1e-3)
        assert solution.M_inf[0, 0] == pytest.approx(GOLDEN, abs=1e-8)
        assert solution.rho_closed == pytest.approx(0.382, abs=1e-3)
        assert solution.diagnostics["are_residual"] <= 1e-8

    def test_nondetectable(self, nondetectable):
        """The non-detectable benchmark raises"""
        system, cost = nondetectable
        with pytest.raises(NotDetectableError):
            sinf_solve(system, cost)

    def test_cost_is_rollout(self, unstable_scalar):
        """J is the finite-horizon cost of the constant gain"""
        system, cost = unstable_scalar
        solution = sinf_solve(system, cost)
        x, J = 1.0, 0.0
        K = solution.K[0, 0]
        for _ in range(cost.T):
            J += x * x * (1.0 + K * K)
            x = (2.0 + K) * x
        J += x * x
        assert solution.J == pytest.approx(J)


@pytest.mark.unit
class TestFeedbackFromL:
    """Test suite for the L feedback map"""

    def test_zero_factor(self):
        """L = 0 gives K = 0"""
        K = feedback_from_L(np.zeros((2, 2)), np.eye(2), np.ones((2, 1)), np.eye(1))
        np.testing.assert_allclose(K, 0.0)

    def test_scalar_matches_are(self):
        """L^2 = M_inf reproduces the ARE gain"""
        K = feedback_from_L([[np.sqrt(GOLDEN)]], [[1.0]], [[1.0]], [[1.0]])
        assert K[0, 0] == pytest.approx(-0.6180, abs=1e-4)

    def test_orthogonal_invariance(self):
        """K depends on L only through L'L"""
        rng = np.random.default_rng(12)
        L = rng.standard_normal((3, 3))
        U = ortho_group.rvs(3, random_state=5)
        F, G, R = rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), np.eye(2)
        np.testing.assert_allclose(feedback_from_L(U @ L, F, G, R), feedback_from_L(L, F, G, R), atol=1e-12)

    def test_stack_matches_loop(self):
        """A stack of state matrices gives one gain per scenario"""
        rng = np.random.default_rng(14)
        L = rng.standard_normal((2, 2))
        F = rng.standard_normal((4, 2, 2))
        G, R = rng.standard_normal((2, 1)), np.eye(1)
        stacked = feedback_from_L(L, F, G, R)
        assert stacked.shape == (4, 1, 2)
        for i in range(4):
            np.testing.assert_allclose(stacked[i], feedback_from_L(L, F[i], G, R))

    def test_infinite_horizon_system(self):
        """Sanity check on a 2x2 plant: L'L = M_inf gives the ARE gain"""
        system = LtiSystem(F=[[1.1, 0.3], [0.0, 0.8]], G=[[0.0], [1.0]], x0=[1.0, 1.0])
        cost = CostSpec(Q=np.eye(2), R=[[1.0]], S=np.eye(2), T=5)
        solution = sinf_solve(system, cost)
        L = np.linalg.cholesky(solution.M_inf).T
        np.testing.assert_allclose(
            feedback_from_L(L, system.F, system.G, cost.R), solution.K, atol=1e-8
        )
