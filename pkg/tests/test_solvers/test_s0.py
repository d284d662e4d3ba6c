"""Tests for the S0 alternating minimization"""

import numpy as np
import pytest

from src.core.constants import Method
from src.models.schemas import LtiSystem
from src.solvers.lqr import optimal_cost, rollout
from src.solvers.s0 import c1_evaluate, c1_value_and_gradient, run_s0, s0_solve
from src.utils.matrix_kernel import spectral_radius


def _objective(K, C, D, system, cost, mu):
    return c1_evaluate(K, C, D, system.F, system.G, system.x0, cost, mu).objective


@pytest.mark.unit
class TestC1Gradient:
    """Test suite for the adjoint gradient of the (C1) objective"""

    def test_value_is_rollout_cost(self, random_problem):
        """v(K) is the closed-loop finite-horizon cost"""
        system, cost = random_problem(np.random.default_rng(1), n=3, m=2, T=5)
        K = 0.3 * np.random.default_rng(2).standard_normal((2, 3))
        C, D = np.eye(3), np.zeros((2, 3))
        value, _ = c1_value_and_gradient(K, C, D, system, cost, mu=0.01)
        assert value == pytest.approx(rollout(system, cost, K).cost, rel=1e-12)

    def test_gradient_matches_finite_differences(self, random_problem):
        """Central differences agree to 1e-5 relative at 20 points on each of 10 systems"""
        rng = np.random.default_rng(30)
        mu, h = 0.05, 1e-6
        for _ in range(10):
            n, m = (int(v) for v in rng.integers(1, [5, 4]))
            system, cost = random_problem(rng, n=n, m=m, T=int(rng.integers(2, 9)))
            for _ in range(20):
                K = 0.3 * rng.standard_normal((m, n))
                C = np.eye(n) + 0.3 * rng.standard_normal((n, n))
                D = 0.3 * rng.standard_normal((m, n))
                _, grad = c1_value_and_gradient(K, C, D, system, cost, mu)

                fd = np.zeros_like(K)
                for idx in np.ndindex(*K.shape):
                    E = np.zeros_like(K)
                    E[idx] = h
                    fd[idx] = (
                        _objective(K + E, C, D, system, cost, mu)
                        - _objective(K - E, C, D, system, cost, mu)
                    ) / (2.0 * h)
                assert np.linalg.norm(fd - grad) <= 1e-5 * np.linalg.norm(grad)

    def test_zero_initial_state(self, random_problem):
        """x0 = 0 leaves only the penalty gradient (KCC' - DC')/mu"""
        system, cost = random_problem(np.random.default_rng(6), n=2, m=1, T=3)
        system = LtiSystem(F=system.F, G=system.G, x0=np.zeros(2))
        rng = np.random.default_rng(7)
        K, C, D = rng.standard_normal((1, 2)), rng.standard_normal((2, 2)), rng.standard_normal((1, 2))
        value, grad = c1_value_and_gradient(K, C, D, system, cost, mu=0.5)
        assert value == 0.0
        np.testing.assert_allclose(grad, (K @ C @ C.T - D @ C.T) / 0.5)

    def test_stack_uses_worst_scenario(self, random_problem):
        """With several scenarios the value is the max and the active index its argmax"""
        system, cost = random_problem(np.random.default_rng(9), n=2, m=1, T=4)
        stack = np.stack([system.F, 1.2 * system.F, 0.5 * system.F])
        K, C, D = np.zeros((1, 2)), np.eye(2), np.zeros((1, 2))
        evaluation = c1_evaluate(K, C, D, stack, system.G, system.x0, cost, mu=0.01)
        assert evaluation.value == pytest.approx(np.max(evaluation.values))
        assert evaluation.active == int(np.argmax(evaluation.values))
        single = c1_evaluate(
            K, C, D, stack[evaluation.active], system.G, system.x0, cost, mu=0.01
        )
        np.testing.assert_allclose(evaluation.gradient, single.gradient)


@pytest.mark.unit
class TestS0Solve:
    """Test suite for s0_solve"""

    def test_stabilizes_unstable_scalar(self, unstable_scalar, fast_s0_config):
        """F = 2: the returned K satisfies |2 + K| < 1"""
        system, cost = unstable_scalar
        solution = s0_solve(system, cost, fast_s0_config, np.random.default_rng(0))
        assert abs(2.0 + solution.K[0, 0]) < 1.0
        assert solution.method == Method.S0
        assert solution.rho_closed == pytest.approx(spectral_radius(system.F + system.G @ solution.K))

    def test_cost_not_below_optimum(self, unstable_scalar, fast_s0_config):
        """A constant gain never beats the time-varying optimum"""
        system, cost = unstable_scalar
        solution = s0_solve(system, cost, fast_s0_config, np.random.default_rng(1))
        assert solution.J >= optimal_cost(system, cost) - 1e-9
        assert solution.J == pytest.approx(rollout(system, cost, solution.K).cost)

    def test_monotone_outer_descent(self, unstable_scalar, fast_s0_config):
        """The outer objective never increases"""
        system, cost = unstable_scalar
        solution = s0_solve(system, cost, fast_s0_config, np.random.default_rng(2))
        history = solution.diagnostics["objective_history"]
        assert len(history) == solution.iterations
        for before, after in zip(history, history[1:]):
            assert after <= before + 1e-10 * max(1.0, abs(before))

    def test_certificate_attached(self, unstable_scalar, fast_s0_config):
        """The final LMI certificate is returned"""
        system, cost = unstable_scalar
        solution = s0_solve(system, cost, fast_s0_config, np.random.default_rng(3))
        assert solution.certificate is not None
        assert solution.certificate.xi == fast_s0_config.xi

    def test_deterministic_given_seed(self, unstable_scalar, fast_s0_config):
        """Same seed, same gain"""
        system, cost = unstable_scalar
        a = s0_solve(system, cost, fast_s0_config, np.random.default_rng(42))
        b = s0_solve(system, cost, fast_s0_config, np.random.default_rng(42))
        np.testing.assert_array_equal(a.K, b.K)

    def test_nondetectable_system(self, nondetectable, fast_s0_config):
        """S0 still stabilizes the system without a stabilizing ARE solution"""
        system, cost = nondetectable
        solution = s0_solve(system, cost, fast_s0_config, np.random.default_rng(4))
        assert solution.rho_closed < 1.0

    def test_run_s0_reports_active_scenarios(self, unstable_scalar, fast_s0_config):
        """The worst-case run records which scenarios were active"""
        system, cost = unstable_scalar
        stack = np.stack([system.F, 0.9 * system.F])
        run = run_s0(stack, system.G, system.x0, cost, fast_s0_config, np.random.default_rng(5))
        assert run.active <= {0, 1}
        assert 0 in run.active
        assert all(abs(F[0, 0] + run.solution.K[0, 0]) < 1.0 for F in stack)
