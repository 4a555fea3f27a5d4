"""Benders decomposition for the robust TEP

Master columns are laid out as [y_m | chi | y_s, dy_cone per snapshot]; the
binaries come first so bb_solve branches on a contiguous range.
"""

import itertools
import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from rtep.core.exceptions import AssemblyError, SlaveSolveError, SolverError
from rtep.models.compact import CompactRobustModel
from rtep.models.network import NetworkCase, UncertaintyBox
from rtep.models.results import (
    BendersCut,
    BendersOptions,
    BendersResult,
    BendersState,
    BruteForceResult,
    CostBreakdown,
    DualSlaveSolution,
    GapRecord,
    IterationSnapshot,
    TepPlan,
    WorstCaseReport,
)
from rtep.models.solver import IpmOptions, LpProblem, LpStatus, MilpProblem
from rtep.services.dual_nlp import solve_dual_nlp
from rtep.services.formulation import assemble_compact, build_uncertain_tep
from rtep.services.milp import bb_solve, stack_rows
from rtep.services.netcase import build_uncertainty_box
from rtep.services.slave import (
    PlanLike,
    dual_from_primal,
    dual_objective_at,
    dual_residuals,
    plan_vector,
    solve_dual_slave,
    solve_primal_slave,
)

logger = logging.getLogger(__name__)

Snapshot = Tuple[np.ndarray, np.ndarray]


def robust_model(case: NetworkCase, box: Optional[UncertaintyBox] = None) -> CompactRobustModel:
    """Compact model of the case over a box (zero width when omitted)"""
    box = box or build_uncertainty_box(case, 0.0, 0.0)
    return assemble_compact(build_uncertain_tep(case, box))


def make_plan(model: CompactRobustModel, y_m: np.ndarray) -> TepPlan:
    labels = [name[len("x["):-1] for name in model.space.y_m.names]
    y_m = np.round(np.asarray(y_m, dtype=float))
    return TepPlan(
        case=model.case.name,
        y_m=y_m,
        labels=labels,
        investment_cost=model.case.annualize(float(model.F_m @ y_m)),
    )


def make_cut(model: CompactRobustModel, y_m: np.ndarray, sol: DualSlaveSolution) -> BendersCut:
    """chi >= F_c + (T y - r)'z_ms - t_e'lambda - t_ie'z + Psi'xi at the snapped xi"""
    constant = (
        model.F_c
        - model.r @ sol.z_ms
        - model.t_e @ sol.lam_e
        - model.t_ie @ sol.z_ie
        + sol.psi @ sol.xi
    )
    return BendersCut(
        constant=float(constant),
        coef=np.asarray(model.T.T @ sol.z_ms, dtype=float),
        y_m=np.asarray(y_m, dtype=float).copy(),
        sd=sol.sd,
    )


def evaluate_cut(cut: BendersCut, y_m: np.ndarray) -> float:
    return cut.value(y_m)


def build_master(
    model: CompactRobustModel,
    cuts: Sequence[BendersCut],
    xi_p: np.ndarray,
    y_cone_p: np.ndarray,
    options: Optional[BendersOptions] = None,
    history: Sequence[Snapshot] = (),
) -> MilpProblem:
    """Master MILP of the p-th iteration

    Rows: A y_m <= h, every cut, and per operating snapshot (xi, y_cone):
    T y_m + G y_s <= r, B_e y_s = t_e - J_e xi, B_ie y_s <= t_ie - J_ie xi,
    dy + U y_s = -y_cone, y_cone'H(y_cone + 2 dy) <= 0 and chi >= F_s'y_s + F_c.
    With variable_reduction the dy columns are substituted out.
    `history` holds earlier snapshots, used when accumulate_snapshots is set.
    """
    opt = options or BendersOptions()
    if not cuts:
        raise AssemblyError("build_master needs at least one cut")
    n_m, n_s, n_c = model.n_m, model.n_s, 4 * model.n_cones
    snapshots: List[Snapshot] = list(history) if opt.accumulate_snapshots else []
    snapshots.append((np.asarray(xi_p, dtype=float), np.asarray(y_cone_p, dtype=float)))
    block = n_s if opt.variable_reduction else n_s + n_c
    n = n_m + 1 + block * len(snapshots)
    chi = n_m

    def columns(matrix, first: int) -> sp.csr_matrix:
        """Place `matrix` at column offset `first` of an n-column block"""
        matrix = sp.csr_matrix(matrix)
        left = sp.csr_matrix((matrix.shape[0], first))
        right = sp.csr_matrix((matrix.shape[0], n - first - matrix.shape[1]))
        return sp.hstack([left, matrix, right], format="csr")

    rows, senses, rhs = [], [], []

    def add(matrix, sense: str, b: np.ndarray):
        matrix = sp.csr_matrix(matrix)
        if matrix.shape[0]:
            rows.append(matrix)
            senses.append(np.full(matrix.shape[0], sense))
            rhs.append(np.asarray(b, dtype=float))

    add(columns(model.A, 0), "<", model.h)

    cut_coef = np.vstack([np.append(cut.coef, -1.0) for cut in cuts])
    add(columns(cut_coef, 0), "<", np.array([-cut.constant for cut in cuts]))

    H = model.H
    for s, (xi, y_cone) in enumerate(snapshots):
        first = n_m + 1 + s * block
        add(columns(model.T, 0) + columns(model.G, first), "<", model.r)
        add(columns(model.B_e, first), "=", model.t_e - model.J_e @ xi)
        add(columns(model.B_ie, first), "<", model.t_ie - model.J_ie @ xi)

        D = y_cone.reshape(model.n_cones, 4)
        HD = D @ H
        curvature = np.einsum("ij,ij->i", D, HD)
        if opt.variable_reduction:
            if opt.taylor_rows and model.n_cones:
                # -2 (H y^p)'U y_s <= y^p'H y^p
                tangent = -2.0 * sp.csr_matrix(sp.block_diag([hd.reshape(1, 4) for hd in HD])) @ model.U
                add(columns(tangent, first), "<", curvature)
        elif n_c:
            link = sp.hstack([model.U, sp.identity(n_c, format="csr")], format="csr")
            add(columns(link, first), "=", -y_cone)
            if opt.taylor_rows:
                # 2 (H y^p)'dy <= -y^p'H y^p
                tangent = 2.0 * sp.csr_matrix(sp.block_diag([hd.reshape(1, 4) for hd in HD]))
                add(columns(tangent, first + n_s), "<", -curvature)

        epigraph = sp.lil_matrix((1, n))
        epigraph[0, first:first + n_s] = model.F_s
        epigraph[0, chi] = -1.0
        add(epigraph, "<", np.array([-model.F_c]))

    c = np.zeros(n)
    c[:n_m] = model.F_m
    c[chi] = 1.0
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    lb[:n_m] = 0.0
    ub[:n_m] = 1.0
    lp = LpProblem(
        c=c,
        A=stack_rows(rows, n),
        senses=np.concatenate(senses) if senses else np.zeros(0, dtype="<U1"),
        b=np.concatenate(rhs) if rhs else np.zeros(0),
        lb=lb,
        ub=ub,
    )
    return MilpProblem(lp=lp, binaries=np.arange(n_m))


def _initial_plan(case: NetworkCase, model: CompactRobustModel, opt: BendersOptions) -> np.ndarray:
    if opt.init_topology == "deterministic":
        logger.info("Initial topology from the deterministic solve")
        det = solve_deterministic(case, opt.model_copy(update={"init_topology": "all"}))
        return det.plan.vector
    return np.ones(model.n_m)


def benders_solve(
    case: NetworkCase,
    box: UncertaintyBox,
    options: Optional[BendersOptions] = None,
) -> BendersResult:
    """Robust TEP by Benders decomposition

    Each iteration adds the cut of the latest dual slave, solves the master
    for a lower bound and a new plan, and evaluates that plan's worst case
    for an upper bound. Stops when (UB - LB)/UB < tolerance or at max_iters;
    a run that hits the cap comes back with state.converged False.
    """
    opt = options or BendersOptions()
    tolerance = opt.tolerance or case.bd_tolerance
    model = robust_model(case, box)
    started = time.perf_counter()
    logger.info(
        f"Benders on '{case.name}' (u_d={box.u_d:g}%, u_r={box.u_r:g}%): "
        f"{model.n_m} binaries, {model.n_s} slave variables, tolerance {tolerance:g}"
    )

    y_m = _initial_plan(case, model, opt)
    sol = solve_dual_slave(model, y_m, opt.slave)
    state = BendersState(ub=float(model.F_m @ y_m + sol.sd), best_y_m=y_m.copy(), best_sd=sol.sd)
    best_sol = sol
    history: List[Snapshot] = []

    for p in range(1, opt.max_iters + 1):
        state.iteration = p
        state.cuts.append(make_cut(model, y_m, sol))
        master = build_master(model, state.cuts, sol.xi, sol.y_cone, opt, history)
        history.append((sol.xi, sol.y_cone))
        result = bb_solve(master, opt.bb)
        if result.status not in (LpStatus.OPTIMAL, LpStatus.GAP_LIMIT) or result.x.size == 0:
            raise SolverError("Master MILP", f"status {result.status.value} at iteration {p}")
        bound = result.objective if result.status == LpStatus.OPTIMAL else result.bound
        state.lb = max(state.lb, float(bound))

        y_m = np.round(result.x[:model.n_m])
        sol = solve_dual_slave(model, y_m, opt.slave, warm_xi=sol.xi)
        investment = float(model.F_m @ y_m)
        if investment + sol.sd < state.ub:
            state.ub = investment + sol.sd
            state.best_y_m = y_m.copy()
            state.best_sd = sol.sd
            best_sol = sol

        gap = state.gap
        state.snapshots.append(IterationSnapshot(
            p=p, y_m=y_m, xi=sol.xi, y_cone=sol.y_cone, y_s=sol.y_s, sd=sol.sd,
            investment=investment, lb=state.lb, ub=state.ub, gap=gap,
            wall_time=time.perf_counter() - started,
        ))
        logger.info(
            f"BD p={p}: LB {case.annualize(state.lb):.6g} $/yr, UB {case.annualize(state.ub):.6g} $/yr, "
            f"gap {gap:.3e}, SD {sol.sd:.8g} $/h, plan [{make_plan(model, y_m).describe()}]"
        )
        if gap < tolerance:
            state.converged = True
            break

    wall_time = time.perf_counter() - started
    if not state.converged:
        logger.warning(f"Benders stopped at {opt.max_iters} iterations with gap {state.gap:.3e}")
    plan = make_plan(model, state.best_y_m)
    logger.info(f"Robust plan [{plan.describe()}], total {case.annualize(state.ub):.6g} $/yr in {wall_time:.2f}s")
    return BendersResult(
        plan=plan,
        state=state,
        worst_case=best_sol,
        u_d=box.u_d,
        u_r=box.u_r,
        wall_time=wall_time,
        annualization=case.annualization,
    )


def solve_deterministic(case: NetworkCase, options: Optional[BendersOptions] = None) -> BendersResult:
    """Benders on a zero-width box: nominal loads, RES at rated output"""
    opt = options or BendersOptions()
    if opt.init_topology == "deterministic":
        opt = opt.model_copy(update={"init_topology": "all"})
    return benders_solve(case, build_uncertainty_box(case, 0.0, 0.0), opt)


def duality_gap_report(
    case: NetworkCase,
    topology: PlanLike,
    xi: Optional[np.ndarray] = None,
    box: Optional[UncertaintyBox] = None,
    options: Optional[IpmOptions] = None,
    name: str = "",
) -> GapRecord:
    """Primal slave against the dual slave NLP at a fixed plan and xi

    The two are solved independently: the dual NLP runs over the point box
    {xi} from its cold start. Only when that start fails is it retried from
    the dual point of the primal solve, and the record says so.

    Raises:
        SlaveSolveError: If either solve fails
    """
    model = robust_model(case, box)
    y_m = plan_vector(model, topology)
    xi = np.zeros(model.n_xi) if xi is None else np.asarray(xi, dtype=float)
    primal = solve_primal_slave(model, y_m, xi, options)
    point = UncertaintyBox(u_d=model.box.u_d, u_r=model.box.u_r, xi_min=xi.tolist(), xi_max=xi.tolist())
    dual, nlp = solve_dual_nlp(model, y_m, box=point, options=options)
    start = "cold"
    if not nlp.usable:
        logger.warning(f"Dual slave NLP ended with status {nlp.status.value} from the cold start; retrying warm")
        dual, nlp = solve_dual_nlp(
            model, y_m, box=point, options=options, start=dual_from_primal(model, y_m, primal),
        )
        start = "warm"
    if not nlp.usable:
        raise SlaveSolveError(
            f"dual slave NLP ended with status {nlp.status.value}",
            {"status": nlp.status.value, "iterations": nlp.iterations, "message": nlp.message},
        )
    dual_value = dual_objective_at(dual, xi)
    gap = abs(primal.objective - dual_value) / max(abs(primal.objective), 1e-12)
    residuals = dual_residuals(model, y_m, dual, box=point)
    record = GapRecord(
        system=case.name,
        topology=name or make_plan(model, y_m).describe(),
        primal=case.annualize(primal.objective),
        dual=case.annualize(dual_value),
        relative_gap=gap,
        dual_residual=residuals.worst,
        dual_start=start,
    )
    logger.info(
        f"Duality gap on '{case.name}' [{record.topology}]: primal {record.primal:.8g}, "
        f"dual {record.dual:.8g} $/yr, relative gap {gap:.3e}"
    )
    return record


def valid_plans(model: CompactRobustModel):
    """Every plan that installs lines of a corridor in order"""
    corridors = {}
    for x, (c, _) in enumerate(model.space.candidate_lines):
        corridors.setdefault(c, []).append(x)
    groups = list(corridors.values())
    for counts in itertools.product(*[range(len(g) + 1) for g in groups]):
        y = np.zeros(model.n_m)
        for group, count in zip(groups, counts):
            y[group[:count]] = 1.0
        yield y


def brute_force_robust(
    case: NetworkCase,
    box: UncertaintyBox,
    options: Optional[IpmOptions] = None,
) -> BruteForceResult:
    """Exhaustive robust TEP: every valid plan against every box vertex"""
    model = robust_model(case, box)
    nonzero = box.nonzero
    vertices = []
    for bits in itertools.product((False, True), repeat=nonzero.size):
        xi = box.lower.copy()
        chosen = nonzero[np.array(bits, dtype=bool)]
        xi[chosen] = box.upper[chosen]
        vertices.append(xi)

    best = None
    count = 0
    for y_m in valid_plans(model):
        count += 1
        worst, worst_xi = -np.inf, vertices[0]
        for xi in vertices:
            value = solve_primal_slave(model, y_m, xi, options).objective
            if value > worst:
                worst, worst_xi = value, xi
        total = float(model.F_m @ y_m) + worst
        if best is None or total < best[0]:
            best = (total, y_m, worst_xi)
    logger.info(f"Brute force on '{case.name}': {count} plans x {len(vertices)} vertices")
    return BruteForceResult(
        plan=make_plan(model, best[1]),
        cost=best[0],
        worst_xi=best[2],
        plans_evaluated=count,
        vertices=len(vertices),
    )


def cost_breakdown(model: CompactRobustModel, plan: PlanLike, y_s: np.ndarray) -> CostBreakdown:
    """Annualized investment, generation and curtailment costs of a dispatch"""
    case = model.case
    ys = model.space.y_s
    y_m = plan_vector(model, plan)
    generation = sum(
        gen.cost_a * y_s[ys.at("P_g", k)] for k, gen in enumerate(case.generators)
    )
    return CostBreakdown(
        investment=case.annualize(float(model.F_m @ y_m)),
        generation=case.annualize(float(generation)),
        curtailment_load=case.annualize(case.gamma_d * float(np.sum(y_s[ys.span("CP_d")]))),
        curtailment_res=case.annualize(case.gamma_r * float(np.sum(y_s[ys.span("CP_r")]))),
        constant=case.annualize(model.F_c),
    )


def worst_case_report(model: CompactRobustModel, result: BendersResult) -> WorstCaseReport:
    """Per-bus worst-case deviations and curtailments of a robust solve"""
    case = model.case
    ys = model.space.y_s
    sol = result.worst_case
    buses = [str(bus.id) for bus in case.buses]
    n_b = case.n_buses
    y_s = sol.y_s if sol.y_s.size else np.zeros(model.n_s)
    return WorstCaseReport(
        case=case.name,
        u_d=result.u_d,
        u_r=result.u_r,
        xi_d=dict(zip(buses, sol.xi[:n_b].tolist())),
        xi_r=dict(zip(buses, sol.xi[n_b:].tolist())),
        psi=sol.psi.tolist(),
        sd=case.annualize(sol.sd),
        cp_d=dict(zip(buses, y_s[ys.span("CP_d")].tolist())),
        cp_r=dict(zip(buses, y_s[ys.span("CP_r")].tolist())),
    )
