import numpy as np
import pytest
import scipy.sparse as sp
from pydantic import ValidationError

from rtep.models.solver import IpmOptions, LpProblem, NlpProblem, SolveStatus
from rtep.services.benders import robust_model
from rtep.services.dual_nlp import DualSlaveNlp
from rtep.services.formulation import build_deterministic_tep, fixed_topology_problem, nonconvex_start
from rtep.services.ipm import check_derivatives, check_kkt, multistart_solve, pdipm_solve
from rtep.services.milp import lp_solve
from rtep.services.netcase import build_uncertainty_box
from rtep.services.quadratic import build_nlp
from rtep.services.slave import slave_start, slave_system

ONE_LINE = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def _equality_qp():
    """min (x0 - 1)^2 + (x1 - 2)^2  s.t.  x0 + x1 = 1"""
    target = np.array([1.0, 2.0])

    def objective(x):
        return float(np.sum((x - target) ** 2)), 2 * (x - target)

    def constraints(x):
        g = np.array([x[0] + x[1] - 1.0])
        return np.zeros(0), g, sp.csr_matrix((0, 2)), sp.csr_matrix([[1.0, 1.0]])

    return NlpProblem(
        n=2, n_eq=1, x0=np.zeros(2), objective=objective, constraints=constraints,
        hessian=lambda x, lam, mu, cost_mult=1.0: sp.csr_matrix(2 * cost_mult * np.eye(2)),
        name="equality-qp",
    )


def _disc():
    """min x0 + x1  s.t.  x0^2 + x1^2 <= 2"""

    def objective(x):
        return float(x[0] + x[1]), np.ones(2)

    def constraints(x):
        h = np.array([x @ x - 2.0])
        return h, np.zeros(0), sp.csr_matrix(2 * x.reshape(1, 2)), sp.csr_matrix((0, 2))

    return NlpProblem(
        n=2, n_ineq=1, x0=np.array([0.5, 0.5]), objective=objective, constraints=constraints,
        hessian=lambda x, lam, mu, cost_mult=1.0: sp.csr_matrix(2 * mu[0] * np.eye(2)),
        name="disc",
    )


def _linear_nlp(c, A, b, lb, ub):
    """The LP min c.x, A x <= b, lb <= x <= ub as an NLP"""
    n = c.size

    def objective(x):
        return float(c @ x), c

    def constraints(x):
        return A @ x - b, np.zeros(0), sp.csr_matrix(A), sp.csr_matrix((0, n))

    return NlpProblem(
        n=n, n_ineq=A.shape[0], x0=0.5 * (lb + ub), objective=objective, constraints=constraints,
        hessian=lambda x, lam, mu, cost_mult=1.0: sp.csr_matrix((n, n)),
        xmin=lb, xmax=ub, name="lp",
    )


def _square_above_one():
    """min x^2  s.t.  1 - x <= 0"""
    return NlpProblem(
        n=1, n_ineq=1, x0=np.array([3.0]),
        objective=lambda x: (float(x[0] ** 2), 2 * x),
        constraints=lambda x: (np.array([1.0 - x[0]]), np.zeros(0), sp.csr_matrix([[-1.0]]), sp.csr_matrix((0, 1))),
        hessian=lambda x, lam, mu, cost_mult=1.0: sp.csr_matrix([[2.0 * cost_mult]]),
        name="square",
    )


class TestPdipm:
    """Test cases for pdipm_solve"""

    def test_active_bound_multiplier(self):
        """Test x* = 1 with multiplier 2 for min x^2 over x >= 1"""
        sol = pdipm_solve(_square_above_one())
        assert sol.converged
        assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
        assert sol.mu[0] == pytest.approx(2.0, abs=1e-6)

    def test_kkt_residuals_flag_perturbation(self):
        """Test that moving off the optimum raises the stationarity residual"""
        problem = _square_above_one()
        sol = pdipm_solve(problem)
        at_optimum = check_kkt(problem, sol.x, mu=sol.mu)
        moved = check_kkt(problem, sol.x + 1e-2, mu=sol.mu)
        assert at_optimum.within(1e-6)
        assert moved.stationarity > at_optimum.stationarity + 1e-3

    def test_deterministic_iterates(self):
        """Test that identical inputs give identical iterate sequences"""
        first = pdipm_solve(_disc())
        second = pdipm_solve(_disc())
        assert first.history == second.history
        np.testing.assert_array_equal(first.x, second.x)

    def test_equality_constrained_qp(self):
        """Test the projection of (1, 2) on x0 + x1 = 1"""
        sol = pdipm_solve(_equality_qp())
        assert sol.converged
        np.testing.assert_allclose(sol.x, [0.0, 1.0], atol=1e-7)
        assert sol.objective == pytest.approx(2.0, abs=1e-7)
        # df + lam * dg = 0 with df = (-2, -2)
        assert sol.lam[0] == pytest.approx(2.0, abs=1e-6)

    def test_active_nonlinear_inequality(self):
        """Test the minimum of x0 + x1 over a disc"""
        sol = pdipm_solve(_disc())
        assert sol.converged
        np.testing.assert_allclose(sol.x, [-1.0, -1.0], atol=1e-6)
        assert sol.mu[0] == pytest.approx(0.5, abs=1e-5)
        assert check_kkt(_disc(), sol.x, mu=sol.mu).within(1e-5)

    def test_variable_bounds(self):
        """Test that bounds are handled with their own multipliers"""
        c = np.array([-1.0, 1.0])
        problem = _linear_nlp(c, np.zeros((0, 2)), np.zeros(0), np.array([0.0, 0.0]), np.array([3.0, 4.0]))
        sol = pdipm_solve(problem)
        assert sol.converged
        np.testing.assert_allclose(sol.x, [3.0, 0.0], atol=1e-6)
        assert sol.mu_upper[0] == pytest.approx(1.0, abs=1e-5)
        assert sol.mu_lower[1] == pytest.approx(1.0, abs=1e-5)

    def test_matches_lp_engine(self):
        """Test that the interior-point optimum of random LPs equals the HiGHS optimum"""
        rng = np.random.default_rng(11)
        for _ in range(25):
            n, m = 20, 30
            A = rng.normal(size=(m, n))
            b = A @ rng.uniform(0.2, 0.8, size=n) + rng.uniform(0.1, 1.0, size=m)
            c = rng.normal(size=n)
            lb, ub = np.zeros(n), np.ones(n)
            sol = pdipm_solve(_linear_nlp(c, A, b, lb, ub))
            lp = lp_solve(LpProblem(c=c, A=A, senses=np.full(m, "<"), b=b, lb=lb, ub=ub))
            assert sol.converged
            assert sol.objective == pytest.approx(lp.objective, abs=1e-7)

    def test_iteration_limit(self):
        """Test the max-iter status when the limit stops the solve"""
        options = IpmOptions(max_iter=1, tolerance=1e-12, acceptable_tolerance=1e-12)
        sol = pdipm_solve(_disc(), options)
        assert sol.status == SolveStatus.MAX_ITER
        assert not sol.converged
        assert sol.iterations == 1

    def test_acceptable_status(self):
        """Test that a point meeting only the acceptable tolerance is reported as such"""
        options = IpmOptions(max_iter=60, tolerance=1e-30, acceptable_tolerance=1e-4)
        sol = pdipm_solve(_disc(), options)
        assert sol.status == SolveStatus.ACCEPTABLE
        assert sol.acceptable and sol.usable
        assert not sol.converged
        assert "kept after" in sol.message
        np.testing.assert_allclose(sol.x, [-1.0, -1.0], atol=1e-3)

    def test_multistart_keeps_acceptable(self):
        """Test that multistart_solve keeps an acceptable point when no start converges"""
        options = IpmOptions(max_iter=60, tolerance=1e-30, acceptable_tolerance=1e-4)
        sol = multistart_solve(_disc(), [np.array([0.5, 0.5]), np.array([-0.2, 0.3])], options)
        assert sol.status == SolveStatus.ACCEPTABLE
        assert sol.objective == pytest.approx(-2.0, abs=1e-3)

    def test_history_is_recorded(self):
        """Test one history record per iteration"""
        sol = pdipm_solve(_disc())
        assert len(sol.history) == sol.iterations
        assert sol.history[-1]["feasibility"] <= 1e-8

    def test_explicit_start(self):
        """Test that x0 overrides the problem start"""
        sol = pdipm_solve(_equality_qp(), x0=np.array([5.0, -3.0]))
        np.testing.assert_allclose(sol.x, [0.0, 1.0], atol=1e-7)

    def test_multistart_keeps_best(self):
        """Test that multistart_solve returns a converged point"""
        sol = multistart_solve(_disc(), [np.array([0.5, 0.5]), np.array([-0.2, 0.3])])
        assert sol.converged
        assert sol.objective == pytest.approx(-2.0, abs=1e-6)

    def test_multistart_needs_a_start(self):
        """Test that an empty start list is rejected"""
        with pytest.raises(ValueError):
            multistart_solve(_disc(), [])


class TestDerivatives:
    """Test cases for check_derivatives"""

    def test_small_problem(self):
        """Test analytic derivatives of the disc problem"""
        errors = check_derivatives(_disc(), np.array([0.3, -0.7]))
        assert max(errors.values()) < 1e-6

    def test_acopf_rows(self, three_bus):
        """Test analytic derivatives of the fixed-topology ACOPF"""
        model = build_deterministic_tep(three_bus)
        problem, _, _ = fixed_topology_problem(model, np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]))
        x = nonconvex_start(model, np.random.default_rng(5), 0.05)
        errors = check_derivatives(problem, x)
        for name, error in errors.items():
            assert error < 1e-6, name

    @pytest.mark.parametrize("u_d, u_r", [(0.0, 0.0), (10.0, 20.0)], ids=["relaxed", "robust"])
    def test_slave_rows(self, three_bus, u_d, u_r):
        """Test analytic derivatives of the slave OPF with its cone rows"""
        model = robust_model(three_bus, build_uncertainty_box(three_bus, u_d, u_r))
        system, _ = slave_system(model, ONE_LINE, model.box.heavy_vertex())
        problem, _ = build_nlp(system, model.F_s, slave_start(model), cost_constant=model.F_c)
        errors = check_derivatives(problem, slave_start(model, np.random.default_rng(3), 0.05))
        for name, error in errors.items():
            assert error < 1e-6, name

    def test_dual_slave_rows(self, three_bus):
        """Test analytic derivatives of the dual slave NLP"""
        model = robust_model(three_bus, build_uncertainty_box(three_bus, 10.0, 20.0))
        nlp = DualSlaveNlp(model, ONE_LINE)
        rng = np.random.default_rng(8)
        x = nlp.cold_start() + rng.uniform(-0.5, 0.5, nlp.space.size)
        errors = check_derivatives(nlp.problem, x)
        for name, error in errors.items():
            assert error < 1e-6, name


class TestOptions:
    """Test cases for solver option and problem validation"""

    def test_acceptable_tighter_than_tolerance(self):
        """Test that the acceptable tolerance cannot be tighter than the tolerance"""
        with pytest.raises(ValidationError):
            IpmOptions(tolerance=1e-6, acceptable_tolerance=1e-8)

    def test_start_shape_checked(self):
        """Test that x0 must have n entries"""
        problem = _disc()
        with pytest.raises(ValidationError):
            NlpProblem(
                n=3, x0=np.zeros(2), objective=problem.objective,
                constraints=problem.constraints, hessian=problem.hessian,
            )

    def test_bounds_checked(self):
        """Test that crossed variable bounds are rejected"""
        problem = _disc()
        with pytest.raises(ValidationError):
            NlpProblem(
                n=2, x0=np.zeros(2), objective=problem.objective, constraints=problem.constraints,
                hessian=problem.hessian, xmin=np.array([1.0, 0.0]), xmax=np.array([0.0, 1.0]),
            )
