"""Tests for S1 and S2"""

import numpy as np
import pytest

from src.core.constants import Method
from src.core.exceptions import ValidationError
from src.models.schemas import NelderMeadConfig
from src.providers.leslie import leslie_cost, leslie_system, nominal_scenario_params
from src.solvers.are_feedback import (
    closed_loop_costs,
    nelder_mead,
    run_are_feedback,
    s1_solve,
    s1_values,
    s2_solve,
    s2_values,
)
from src.solvers.lqr import optimal_cost, rollout


def _stack(system):
    return system.F[None, :, :]


@pytest.mark.unit
class TestObjectives:
    """Test suite for the S1 and S2 objectives"""

    def test_s1_at_zero_is_open_loop(self, unstable_scalar):
        """L = 0 gives K = 0 and the open-loop cost"""
        system, cost = unstable_scalar
        value = s1_values(np.zeros((1, 1)), _stack(system), system.G, system.x0, cost)
        assert value[0] == pytest.approx(rollout(system, cost, np.zeros((1, 1))).cost)

    def test_closed_loop_costs_match_rollout(self, random_problem):
        """Per-scenario costs equal individual rollouts"""
        rng = np.random.default_rng(3)
        system, cost = random_problem(rng, n=3, m=2, T=4)
        F = np.stack([system.F, 0.5 * system.F])
        K = 0.2 * rng.standard_normal((2, 2, 3))
        costs, F_K = closed_loop_costs(K, F, system.G, system.x0, cost)
        for i in range(2):
            expected = rollout(system.with_state_matrix(F[i]), cost, K[i]).cost
            assert costs[i] == pytest.approx(expected)
            np.testing.assert_allclose(F_K[i], F[i] + system.G @ K[i])

    def test_s2_at_terminal_factor(self):
        """L'L = S reduces S2 to x0'S x0 = 125 on the Leslie setup"""
        system = leslie_system(nominal_scenario_params())
        cost = leslie_cost(5)
        L = np.sqrt(cost.S)
        value = s2_values(L, _stack(system), system.G, system.x0, cost)
        assert value[0] == pytest.approx(125.0)

    def test_s2_at_zero(self, random_problem):
        """L = 0 leaves the open-loop terminal term"""
        system, cost = random_problem(np.random.default_rng(5), n=2, m=1, T=3)
        value = s2_values(np.zeros((2, 2)), _stack(system), system.G, system.x0, cost)
        z = np.linalg.matrix_power(system.F, cost.T) @ system.x0
        assert value[0] == pytest.approx(z @ cost.S @ z)


@pytest.mark.unit
class TestNelderMead:
    """Test suite for the Nelder-Mead wrapper"""

    def test_quadratic(self):
        """A convex quadratic is minimized"""
        config = NelderMeadConfig(max_eval_factor=500)
        result = nelder_mead(lambda x: float(np.sum((x - 1.5) ** 2)), np.zeros(3), config)
        np.testing.assert_allclose(result.x, 1.5, atol=1e-4)
        assert result.converged

    def test_budget(self):
        """Evaluations stay within max_eval_factor * dim, plus at most one simplex"""
        config = NelderMeadConfig(max_eval_factor=10, restarts=3)
        result = nelder_mead(lambda x: float(np.sum(np.abs(x - 3.0))), np.zeros(2), config)
        assert result.evaluations <= 20 + 3

    def test_never_worse_than_start(self):
        """The best value never exceeds the starting value"""
        config = NelderMeadConfig(max_eval_factor=5)
        f = lambda x: float(np.sum(np.cos(3.0 * x)))
        x0 = np.array([0.3, -0.2])
        assert nelder_mead(f, x0, config).fun <= f(x0)


@pytest.mark.unit
class TestS1S2:
    """Test suite for s1_solve and s2_solve"""

    def test_s1_improves_on_zero(self, unstable_scalar, fast_nm_config):
        """F = 2, T = 8: strict decrease from the L = 0 objective"""
        system, cost = unstable_scalar
        start = rollout(system, cost, np.zeros((1, 1))).cost
        solution = s1_solve(system, cost, fast_nm_config, np.random.default_rng(0))
        assert solution.objective < start
        assert solution.method == Method.S1

    def test_s1_above_classic_optimum(self, unstable_scalar, fast_nm_config):
        """The constant gain cannot beat x0'M_0 x0"""
        system, cost = unstable_scalar
        solution = s1_solve(system, cost, fast_nm_config, np.random.default_rng(1))
        assert solution.objective >= optimal_cost(system, cost) - 1e-9
        assert solution.J == pytest.approx(solution.objective)

    def test_s1_stabilizes_scalar(self, unstable_scalar, fast_nm_config):
        """The S1 gain stabilizes F = 2"""
        system, cost = unstable_scalar
        solution = s1_solve(system, cost, fast_nm_config, np.random.default_rng(2))
        assert abs(2.0 + solution.K[0, 0]) < 1.0
        assert solution.L is not None

    def test_s2_returns_consistent_gain(self, unstable_scalar, fast_nm_config):
        """K is the feedback map evaluated at the returned L"""
        system, cost = unstable_scalar
        solution = s2_solve(system, cost, fast_nm_config, np.random.default_rng(3))
        L = solution.L[0, 0]
        expected = -(L * L * 2.0) / (1.0 + L * L)
        assert solution.K[0, 0] == pytest.approx(expected)
        assert solution.method == Method.S2

    def test_deterministic_given_seed(self, unstable_scalar, fast_nm_config):
        """Same seed, same result"""
        system, cost = unstable_scalar
        a = s1_solve(system, cost, fast_nm_config, np.random.default_rng(9))
        b = s1_solve(system, cost, fast_nm_config, np.random.default_rng(9))
        np.testing.assert_array_equal(a.K, b.K)

    def test_rejects_other_methods(self, unstable_scalar):
        """Only S1 and S2 are L-parameterized"""
        system, cost = unstable_scalar
        with pytest.raises(ValidationError):
            run_are_feedback(Method.SINF, _stack(system), system.G, system.x0, cost)

    def test_worst_case_over_stack(self, unstable_scalar, fast_nm_config):
        """Robust S1 reports the max cost and the worst scenario's gain"""
        system, cost = unstable_scalar
        F = np.stack([system.F, np.array([[1.5]])])
        run = run_are_feedback(
            Method.S1, F, system.G, system.x0, cost, fast_nm_config, np.random.default_rng(4)
        )
        solution = run.solution
        per_scenario = s1_values(solution.L, F, system.G, system.x0, cost)
        assert solution.objective == pytest.approx(np.max(per_scenario))
        assert solution.diagnostics["worst_scenario"] == int(np.argmax(per_scenario))
        assert 0 in run.influential
