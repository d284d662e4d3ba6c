"""Tests for the four finite-horizon LQR formulations"""

import numpy as np
import pytest

from src.core.exceptions import ValidationError
from src.models.schemas import CostSpec, InputSequence, LtiSystem
from src.solvers.lqr import (
    build_p1,
    build_p2,
    dre_sweep,
    optimal_cost,
    p1_constant,
    p2_dense_solution,
    pontryagin_residuals,
    rollout,
    solve_p1,
    solve_p2,
    solve_p4,
)
from src.solvers.riccati import solve_are


@pytest.fixture
def one_step():
    """F = G = S = R = x0 = 1, T = 1"""
    return (
        LtiSystem(F=[[1.0]], G=[[1.0]], x0=[1.0]),
        CostSpec(Q=[[3.0]], R=[[1.0]], S=[[1.0]], T=1),
    )


@pytest.fixture
def random_instance(random_problem):
    return random_problem(np.random.default_rng(11), n=3, m=2, T=4)


@pytest.mark.unit
class TestDenseQp:
    """Test suite for P1"""

    def test_scalar_blocks(self, one_step):
        """Only the S and R terms survive at T = 1"""
        B, a = build_p1(*one_step)
        np.testing.assert_allclose(B, [[2.0]])
        np.testing.assert_allclose(a, [1.0])

    def test_scalar_solution(self, one_step):
        """Minimizing (1 + u)^2 + u^2 gives u = -1/2 at cost 1/2"""
        system, cost = one_step
        u = solve_p1(system, cost)
        assert u.u[0, 0] == pytest.approx(-0.5)
        assert rollout(system, cost, u).cost == pytest.approx(0.5)

    def test_no_actuation(self, random_problem):
        """G = 0 leaves only the R blocks and a zero linear term"""
        system, cost = random_problem(np.random.default_rng(3), n=2, m=2, T=3)
        system = LtiSystem(F=system.F, G=np.zeros((2, 2)), x0=system.x0)
        B, a = build_p1(system, cost)
        np.testing.assert_allclose(a, 0.0)
        np.testing.assert_allclose(B, np.kron(np.eye(3), cost.R))

    def test_zero_initial_state(self, random_instance):
        """x0 = 0 gives u = 0"""
        system, cost = random_instance
        system = LtiSystem(F=system.F, G=system.G, x0=np.zeros(system.n))
        np.testing.assert_allclose(solve_p1(system, cost).u, 0.0, atol=1e-12)

    def test_quadratic_matches_rollout(self, random_instance):
        """u'Bu + 2a'u + c equals the rolled-out cost"""
        system, cost = random_instance
        B, a = build_p1(system, cost)
        c = p1_constant(system, cost)
        u = np.random.default_rng(5).standard_normal(cost.T * system.m)
        J = rollout(system, cost, InputSequence(u=u.reshape(cost.T, system.m))).cost
        assert u @ B @ u + 2.0 * a @ u + c == pytest.approx(J, rel=1e-10)

    def test_hessian_by_finite_differences(self, random_instance):
        """2B is the Hessian of the rolled-out cost"""
        system, cost = random_instance
        B, _ = build_p1(system, cost)
        d, h = B.shape[0], 1e-2
        u0 = np.random.default_rng(8).standard_normal(d)

        def J(u):
            return rollout(system, cost, InputSequence(u=u.reshape(cost.T, system.m))).cost

        H = np.zeros((d, d))
        E = np.eye(d) * h
        for i in range(d):
            for j in range(d):
                H[i, j] = (
                    J(u0 + E[i] + E[j]) - J(u0 + E[i] - E[j]) - J(u0 - E[i] + E[j]) + J(u0 - E[i] - E[j])
                ) / (4.0 * h * h)
        np.testing.assert_allclose(H, 2.0 * B, rtol=1e-5, atol=1e-6)


@pytest.mark.unit
class TestSparseKkt:
    """Test suite for P2"""

    def test_block_instantiation(self):
        """T = 1, F = 2, G = 3"""
        system = LtiSystem(F=[[2.0]], G=[[3.0]], x0=[0.7])
        cost = CostSpec(Q=[[1.0]], R=[[1.0]], S=[[1.0]], T=1)
        blocks = build_p2(system, cost)
        np.testing.assert_allclose(blocks.A1, [[1.0, 0.0], [-2.0, 1.0]])
        np.testing.assert_allclose(blocks.A2, [[0.0], [-3.0]])
        np.testing.assert_allclose(blocks.b, [0.7, 0.0])

    def test_kkt_residuals(self, random_instance):
        """All three KKT blocks vanish at the returned point"""
        system, cost = random_instance
        blocks = build_p2(system, cost)
        sol = solve_p2(system, cost)
        x, u, lam = sol.states.ravel(), sol.inputs.stacked, sol.multipliers.ravel()

        assert np.max(np.abs(2.0 * blocks.Q_bar @ x + blocks.A1.T @ lam)) < 1e-10
        assert np.max(np.abs(2.0 * blocks.R_bar @ u + blocks.A2.T @ lam)) < 1e-10
        assert np.max(np.abs(blocks.A1 @ x + blocks.A2 @ u - blocks.b)) < 1e-10

    def test_zero_initial_state(self, random_instance):
        """x0 = 0 gives zero states, inputs and multipliers"""
        system, cost = random_instance
        system = LtiSystem(F=system.F, G=system.G, x0=np.zeros(system.n))
        sol = solve_p2(system, cost)
        np.testing.assert_allclose(sol.states, 0.0, atol=1e-14)
        np.testing.assert_allclose(sol.inputs.u, 0.0, atol=1e-14)
        np.testing.assert_allclose(sol.multipliers, 0.0, atol=1e-14)

    def test_dense_closed_form_agrees(self, random_instance):
        """The dense cross-check matches the sparse solve"""
        system, cost = random_instance
        np.testing.assert_allclose(
            p2_dense_solution(system, cost).u, solve_p2(system, cost).inputs.u, atol=1e-8
        )


@pytest.mark.unit
class TestRiccatiAndPontryagin:
    """Test suite for P3 and P4"""

    def test_scalar_sweep(self, scalar_system, scalar_cost):
        """F = G = Q = R = S = 1, T = 2 by hand"""
        sweep = dre_sweep(scalar_system, scalar_cost)
        np.testing.assert_allclose(sweep.M.ravel(), [1.6, 1.5, 1.0])
        np.testing.assert_allclose(sweep.K.ravel(), [-0.6, -0.5])

    def test_zero_weights(self, random_instance):
        """S = Q = 0 gives zero value matrices and gains"""
        system, cost = random_instance
        n = system.n
        zero = CostSpec(Q=np.zeros((n, n)), R=cost.R, S=np.zeros((n, n)), T=cost.T)
        sweep = dre_sweep(system, zero)
        np.testing.assert_allclose(sweep.M, 0.0)
        np.testing.assert_allclose(sweep.K, 0.0)

    def test_optimal_cost_scalar(self, scalar_system, scalar_cost):
        """x0'M_0 x0 = 1.6"""
        assert optimal_cost(scalar_system, scalar_cost) == pytest.approx(1.6)

    def test_pontryagin_scalar(self, scalar_system, scalar_cost):
        """u_0 = K_0 x0 = -0.6 and lambda_0 = -2 M_0 x0 = -3.2"""
        u, lam = solve_p4(scalar_system, scalar_cost)
        assert u.u[0, 0] == pytest.approx(-0.6)
        assert lam.lam[0, 0] == pytest.approx(-3.2)

    def test_pontryagin_residuals(self, random_instance):
        """Every optimality condition holds along the P4 trajectory"""
        system, cost = random_instance
        u, lam = solve_p4(system, cost)
        states = rollout(system, cost, u).states
        residuals = pontryagin_residuals(system, cost, states, u.u, lam.lam)
        assert set(residuals) == {"initial", "dynamics", "costate", "terminal", "stationarity"}
        assert max(residuals.values()) < 1e-9

    def test_formulations_agree(self, random_instance):
        """P1, P2, P3 and P4 give the same inputs and the same optimum"""
        system, cost = random_instance
        u1 = solve_p1(system, cost).u
        u2 = solve_p2(system, cost).inputs.u
        u4, _ = solve_p4(system, cost)
        np.testing.assert_allclose(u1, u2, atol=1e-8)
        np.testing.assert_allclose(u1, u4.u, atol=1e-8)

        J1 = rollout(system, cost, InputSequence(u=u1)).cost
        J3 = rollout(system, cost, dre_sweep(system, cost)).cost
        assert J1 == pytest.approx(optimal_cost(system, cost), rel=1e-9)
        assert J3 == pytest.approx(J1, rel=1e-9)

    def test_formulations_agree_on_many_systems(self, random_problem):
        """100 random systems up to n = m = 5, T = 10: P1 to P4 inputs within 1e-6"""
        rng = np.random.default_rng(23)
        for _ in range(100):
            n, m, T = (int(v) for v in rng.integers(1, [6, 6, 11]))
            system, cost = random_problem(rng, n=n, m=m, T=T)
            u1 = solve_p1(system, cost).u
            scale = max(1.0, float(np.linalg.norm(u1)))
            others = (
                solve_p2(system, cost).inputs.u,
                rollout(system, cost, dre_sweep(system, cost)).inputs,
                solve_p4(system, cost)[0].u,
            )
            for u in others:
                assert np.linalg.norm(u - u1) <= 1e-6 * scale

    def test_sweep_stationary_from_are_solution(self, random_problem):
        """S = M_inf makes every DRE iterate equal M_inf"""
        rng = np.random.default_rng(29)
        for _ in range(10):
            system, cost = random_problem(rng, n=3, m=2, T=8, rho=1.3)
            are = solve_are(system.F, system.G, cost.Q, cost.R)
            stationary = CostSpec(Q=cost.Q, R=cost.R, S=are.M, T=cost.T)
            sweep = dre_sweep(system, stationary)
            scale = max(1.0, float(np.linalg.norm(are.M)))
            for M_t in sweep.M:
                assert np.linalg.norm(M_t - are.M) <= 1e-8 * scale


@pytest.mark.unit
class TestRollout:
    """Test suite for rollouts"""

    def test_zero_inputs(self, scalar_system, scalar_cost):
        """u = 0, F = 1, Q = S = 1, x0 = 1, T = 2 gives three unit states"""
        result = rollout(scalar_system, scalar_cost, InputSequence(u=np.zeros((2, 1))))
        assert result.cost == pytest.approx(3.0)
        np.testing.assert_allclose(result.states.ravel(), [1.0, 1.0, 1.0])

    def test_constant_gain(self, scalar_system, scalar_cost):
        """u_t = -x_t drives F = 1 to zero in one step"""
        result = rollout(scalar_system, scalar_cost, np.array([[-1.0]]))
        np.testing.assert_allclose(result.states.ravel(), [1.0, 0.0, 0.0])
        assert result.cost == pytest.approx(2.0)

    def test_wrong_gain_shape(self, scalar_system, scalar_cost):
        """Test a gain with the wrong shape"""
        with pytest.raises(ValidationError):
            rollout(scalar_system, scalar_cost, np.ones((2, 2)))

    def test_wrong_sequence_length(self, scalar_system, scalar_cost):
        """Test an input sequence with the wrong horizon"""
        with pytest.raises(ValidationError):
            rollout(scalar_system, scalar_cost, InputSequence(u=np.zeros((3, 1))))

    def test_incompatible_cost(self, scalar_system):
        """Test weights that do not match the system"""
        cost = CostSpec(Q=np.eye(2), R=[[1.0]], S=np.eye(2), T=2)
        with pytest.raises(ValidationError):
            build_p1(scalar_system, cost)
