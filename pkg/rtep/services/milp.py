"""LP engine and best-bound branch-and-bound for the master problem"""

import heapq
import itertools
import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from rtep.core.exceptions import LpFailure
from rtep.models.solver import (
    BranchAndBoundOptions,
    LpProblem,
    LpSolution,
    LpStatus,
    MilpProblem,
    MilpSolution,
)

logger = logging.getLogger(__name__)

# linprog status codes
_LINPROG_STATUS = {
    0: LpStatus.OPTIMAL,
    2: LpStatus.INFEASIBLE,
    3: LpStatus.UNBOUNDED,
}


def lp_solve(
    problem: LpProblem,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
) -> LpSolution:
    """Solve an LP with HiGHS and return primal values and duals

    Duals use the Lagrangian c.x + y.(A x - b): y >= 0 on '<' rows, free on
    '=' rows, and the bound multipliers are non-negative.

    Args:
        problem: LP data
        lb, ub: Optional column bounds overriding the problem's (used by
            branch-and-bound nodes)

    Raises:
        LpFailure: If HiGHS stops for a reason other than optimality,
            infeasibility or unboundedness
    """
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    if np.any(lb > ub):
        return LpSolution(status=LpStatus.INFEASIBLE, message="empty column bounds")

    is_ub = problem.senses == "<"
    is_eq = ~is_ub
    A = problem.A
    kwargs = {}
    if is_ub.any():
        kwargs["A_ub"] = A[is_ub]
        kwargs["b_ub"] = problem.b[is_ub]
    if is_eq.any():
        kwargs["A_eq"] = A[is_eq]
        kwargs["b_eq"] = problem.b[is_eq]
    bounds = np.column_stack([
        np.where(np.isfinite(lb), lb, -np.inf),
        np.where(np.isfinite(ub), ub, np.inf),
    ])

    res = linprog(problem.c, bounds=bounds, method="highs", **kwargs)
    status = _LINPROG_STATUS.get(res.status)
    if status is None:
        raise LpFailure(res.message, {"status": int(res.status)})
    if status != LpStatus.OPTIMAL:
        return LpSolution(status=status, message=res.message)

    row_duals = np.zeros(A.shape[0])
    if is_ub.any():
        row_duals[is_ub] = -res.ineqlin.marginals
    if is_eq.any():
        row_duals[is_eq] = -res.eqlin.marginals
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=np.asarray(res.x, dtype=float),
        objective=float(res.fun) + problem.constant,
        row_duals=row_duals,
        lower_duals=np.asarray(res.lower.marginals, dtype=float),
        upper_duals=-np.asarray(res.upper.marginals, dtype=float),
        message=res.message,
    )


def _most_fractional(x: np.ndarray, binaries: np.ndarray, tol: float) -> Optional[int]:
    """Binary column farthest from integrality, lowest index on ties"""
    if not binaries.size:
        return None
    frac = np.abs(x[binaries] - np.round(x[binaries]))
    if frac.max() <= tol:
        return None
    score = np.abs(x[binaries] - np.floor(x[binaries]) - 0.5)
    best = np.flatnonzero((score == score[frac > tol].min()) & (frac > tol))
    return int(binaries[best].min())


def bb_solve(problem: MilpProblem, options: Optional[BranchAndBoundOptions] = None) -> MilpSolution:
    """Best-bound branch-and-bound over the binary columns

    Args:
        problem: MILP
        options: Node limit, gap and integrality tolerances

    Returns:
        MilpSolution: optimal, infeasible, unbounded, or gap-limit with the
        best incumbent when the node limit stops the search
    """
    opt = options or BranchAndBoundOptions()
    lp = problem.lp
    binaries = problem.binaries
    counter = itertools.count()

    incumbent_x = None
    incumbent = np.inf
    nodes = 0

    root = lp_solve(lp)
    nodes += 1
    if root.status == LpStatus.INFEASIBLE:
        return MilpSolution(status=LpStatus.INFEASIBLE, nodes=nodes)
    if root.status == LpStatus.UNBOUNDED:
        return MilpSolution(status=LpStatus.UNBOUNDED, nodes=nodes)

    heap = [(root.objective, next(counter), lp.lb.copy(), lp.ub.copy(), root)]
    bound = root.objective

    while heap:
        node_bound, node_id, lb, ub, sol = heapq.heappop(heap)
        bound = node_bound
        if node_bound >= incumbent - opt.absolute_gap:
            # best-bound order: every remaining node is dominated too
            heap.clear()
            bound = incumbent
            break

        branch = _most_fractional(sol.x, binaries, opt.integrality_tolerance)
        if branch is None:
            x = sol.x.copy()
            x[binaries] = np.round(x[binaries])
            incumbent, incumbent_x = sol.objective, x
            if opt.log_nodes:
                logger.debug(f"B&B node {node_id}: new incumbent {incumbent:.10g}")
            continue

        if nodes >= opt.node_limit:
            heapq.heappush(heap, (node_bound, node_id, lb, ub, sol))
            break

        for value in (0.0, 1.0):
            child_lb, child_ub = lb.copy(), ub.copy()
            child_lb[branch] = child_ub[branch] = value
            child = lp_solve(lp, child_lb, child_ub)
            nodes += 1
            if child.status != LpStatus.OPTIMAL:
                continue
            if child.objective < incumbent - opt.absolute_gap:
                heapq.heappush(heap, (child.objective, next(counter), child_lb, child_ub, child))
        if opt.log_nodes:
            logger.debug(
                f"B&B node {node_id}: bound {node_bound:.10g}, branched on x[{branch}]={sol.x[branch]:.4f}, "
                f"open {len(heap)}, incumbent {incumbent:.10g}"
            )

    if heap:
        bound = min(bound, heap[0][0])
    if incumbent_x is None:
        if heap:
            return MilpSolution(status=LpStatus.GAP_LIMIT, bound=bound, nodes=nodes)
        return MilpSolution(status=LpStatus.INFEASIBLE, nodes=nodes)

    bound = min(bound, incumbent)
    gap = incumbent - bound
    status = LpStatus.OPTIMAL if gap <= opt.absolute_gap or not heap else LpStatus.GAP_LIMIT
    if status == LpStatus.GAP_LIMIT:
        logger.warning(f"B&B node limit {opt.node_limit} reached with absolute gap {gap:.3e}")
    else:
        bound = incumbent if not heap else bound
    return MilpSolution(
        status=status,
        x=incumbent_x,
        objective=float(incumbent),
        bound=float(bound),
        gap=float(max(gap, 0.0)) if status == LpStatus.GAP_LIMIT else 0.0,
        nodes=nodes,
    )


def stack_rows(blocks, n: int) -> sp.csr_matrix:
    """Vertically stack sparse blocks, allowing an empty list"""
    blocks = [sp.csr_matrix(b) for b in blocks if b is not None and b.shape[0]]
    if not blocks:
        return sp.csr_matrix((0, n))
    return sp.vstack(blocks, format="csr")
