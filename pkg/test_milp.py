import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from pydantic import ValidationError
from scipy.optimize import Bounds, LinearConstraint, milp

from rtep.models.solver import BranchAndBoundOptions, LpProblem, LpStatus, MilpProblem
from rtep.services.milp import bb_solve, lp_solve, stack_rows


def _lp(c, A, b, lb, ub, senses=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return LpProblem(
        c=np.asarray(c, dtype=float), A=A,
        senses=np.asarray(senses if senses is not None else ["<"] * A.shape[0]),
        b=np.asarray(b, dtype=float), lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float),
    )


def _random_milp(rng, n_bin=5, n_cont=2, m=4):
    """Covering-style MILP that is always feasible with every binary at 1"""
    n = n_bin + n_cont
    A = -rng.uniform(0.0, 1.0, size=(m, n))
    b = 0.4 * A.sum(axis=1)
    c = np.concatenate([rng.uniform(0.5, 2.0, n_bin), rng.uniform(0.1, 1.0, n_cont)])
    lb = np.zeros(n)
    ub = np.concatenate([np.ones(n_bin), np.full(n_cont, 2.0)])
    return MilpProblem(lp=_lp(c, A, b, lb, ub), binaries=np.arange(n_bin))


def _brute_force(problem: MilpProblem) -> float:
    best = np.inf
    lp = problem.lp
    for bits in itertools.product([0.0, 1.0], repeat=problem.binaries.size):
        lb, ub = lp.lb.copy(), lp.ub.copy()
        lb[problem.binaries] = ub[problem.binaries] = bits
        sol = lp_solve(lp, lb, ub)
        if sol.status == LpStatus.OPTIMAL:
            best = min(best, sol.objective)
    return best


class TestLpSolve:
    """Test cases for lp_solve"""

    def test_optimum_and_duals(self):
        """Test the vertex and non-negative row duals of a two-row LP"""
        sol = lp_solve(_lp([-1, -1], [[1, 2], [3, 1]], [4, 6], [0, 0], [np.inf, np.inf]))
        assert sol.status == LpStatus.OPTIMAL
        np.testing.assert_allclose(sol.x, [1.6, 1.2], atol=1e-9)
        assert sol.objective == pytest.approx(-2.8)
        np.testing.assert_allclose(sol.row_duals, [0.4, 0.2], atol=1e-9)

    def test_bound_duals(self):
        """Test the multiplier of an active upper bound"""
        sol = lp_solve(_lp([-1, 0], np.zeros((0, 2)), [], [0, 0], [3, 1]))
        assert sol.objective == pytest.approx(-3.0)
        assert sol.upper_duals[0] == pytest.approx(1.0)
        assert sol.upper_duals[0] >= 0 and np.all(sol.lower_duals >= -1e-12)

    def test_equality_row(self):
        """Test an equality row and the constant term"""
        problem = _lp([1, 2], [[1, 1]], [1], [0, 0], [2, 1], senses=["="])
        problem = problem.model_copy(update={"constant": 5.0})
        sol = lp_solve(problem)
        np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-9)
        assert sol.objective == pytest.approx(6.0)
        assert sol.row_duals[0] == pytest.approx(-1.0)

    def test_infeasible(self):
        """Test the infeasible status"""
        sol = lp_solve(_lp([1], [[-1]], [-2], [0], [1]))
        assert sol.status == LpStatus.INFEASIBLE

    def test_unbounded(self):
        """Test the unbounded status"""
        sol = lp_solve(_lp([-1], np.zeros((0, 1)), [], [0], [np.inf]))
        assert sol.status == LpStatus.UNBOUNDED

    def test_crossed_bounds(self):
        """Test that crossed node bounds are infeasible without calling HiGHS"""
        problem = _lp([1], [[1]], [1], [0], [1])
        assert lp_solve(problem, np.array([1.0]), np.array([0.0])).status == LpStatus.INFEASIBLE

    def test_invalid_sense(self):
        """Test that row senses other than '<' and '=' are rejected"""
        with pytest.raises(ValidationError):
            _lp([1], [[1]], [1], [0], [1], senses=[">"])


class TestBranchAndBound:
    """Test cases for bb_solve"""

    def test_matches_brute_force(self):
        """Test the optimum against enumeration of every binary assignment"""
        rng = np.random.default_rng(2021)
        for _ in range(25):
            problem = _random_milp(rng)
            sol = bb_solve(problem)
            assert sol.status == LpStatus.OPTIMAL
            assert sol.objective == pytest.approx(_brute_force(problem), abs=1e-8)
            np.testing.assert_array_equal(sol.x[problem.binaries], np.round(sol.x[problem.binaries]))

    def test_matches_scipy_milp(self):
        """Test the optimum against scipy's MILP interface"""
        rng = np.random.default_rng(7)
        for _ in range(5):
            problem = _random_milp(rng, n_bin=8, n_cont=3, m=6)
            lp = problem.lp
            integrality = np.zeros(lp.n)
            integrality[problem.binaries] = 1
            ref = milp(
                lp.c, constraints=LinearConstraint(lp.A.toarray(), -np.inf, lp.b),
                integrality=integrality, bounds=Bounds(lp.lb, lp.ub),
            )
            sol = bb_solve(problem)
            assert sol.objective == pytest.approx(ref.fun, abs=1e-8)
            assert sol.bound == pytest.approx(sol.objective)

    def test_integral_root(self):
        """Test that an integral LP relaxation is solved at the root"""
        problem = MilpProblem(lp=_lp([1, -1], [[1, 1]], [1], [0, 0], [1, 1]), binaries=np.array([0, 1]))
        sol = bb_solve(problem)
        assert sol.nodes == 1
        np.testing.assert_allclose(sol.x, [0.0, 1.0])

    def test_infeasible(self):
        """Test that an infeasible MILP is reported as such"""
        # x0 + x1 = 1.5 has no binary solution
        lp = _lp([1, 1], [[1, 1]], [1.5], [0, 0], [1, 1], senses=["="])
        problem = MilpProblem(lp=lp, binaries=np.array([0, 1]))
        assert bb_solve(problem).status == LpStatus.INFEASIBLE

    def test_node_limit(self):
        """Test the gap-limit status when the node limit stops the search"""
        problem = MilpProblem(lp=_lp([-1, -1], [[2, 2]], [3], [0, 0], [1, 1]), binaries=np.array([0, 1]))
        sol = bb_solve(problem, BranchAndBoundOptions(node_limit=1))
        assert sol.status == LpStatus.GAP_LIMIT
        assert sol.bound == pytest.approx(-1.5)
        full = bb_solve(problem)
        assert full.status == LpStatus.OPTIMAL
        assert full.objective == pytest.approx(-1.0)

    def test_binary_index_checked(self):
        """Test that binary columns must exist and lie in [0, 1]"""
        lp = _lp([1, 1], [[1, 1]], [1], [0, 0], [1, 2])
        with pytest.raises(ValidationError):
            MilpProblem(lp=lp, binaries=np.array([2]))
        with pytest.raises(ValidationError):
            MilpProblem(lp=lp, binaries=np.array([1]))

    def test_stack_rows_allows_empty(self):
        """Test stacking with no blocks"""
        assert stack_rows([], 4).shape == (0, 4)
        stacked = stack_rows([sp.eye(2, 4), None, sp.csr_matrix((0, 4))], 4)
        assert stacked.shape == (2, 4)
