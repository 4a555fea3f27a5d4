"""Non-convex ACOPF at a fixed plan and the Monte-Carlo robustness harness"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rtep.core.exceptions import AssemblyError
from rtep.models.compact import TepModel
from rtep.models.network import NetworkCase, UncertaintyBox
from rtep.models.results import (
    AcopfSolution,
    DominanceReport,
    McsOptions,
    McsReport,
    McsSample,
    OptimalityGapRecord,
    TepPlan,
)
from rtep.models.solver import IpmOptions
from rtep.services.benders import make_plan, robust_model
from rtep.services.formulation import build_deterministic_tep, fixed_topology_problem, nonconvex_start
from rtep.services.ipm import pdipm_solve
from rtep.services.netcase import build_uncertainty_box
from rtep.services.slave import solve_relaxed_opf

logger = logging.getLogger(__name__)

ACOPF_STARTS = 3
START_SPREAD = 0.05


def acopf_model(case: NetworkCase) -> TepModel:
    """Non-convex model whose injection rows carry xi columns"""
    return build_deterministic_tep(case, build_uncertainty_box(case, 0.0, 0.0))


def _plan_vector(model: TepModel, plan) -> np.ndarray:
    y = plan.vector if isinstance(plan, TepPlan) else np.asarray(plan, dtype=float).ravel()
    if y.shape != (model.space.y_m.size,):
        raise AssemblyError(f"plan has {y.size} entries, expected {model.space.y_m.size}")
    return y


def _corridor_flows(model: TepModel, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Total P_ij and P_ji per corridor, base lines plus installed candidates"""
    case = model.case
    ys = model.space.y_s
    p_from = np.zeros(len(case.corridors))
    p_to = np.zeros(len(case.corridors))
    for corr in case.corridors:
        cii, cjj = x[ys.at("c_ii", corr.i)], x[ys.at("c_ii", corr.j)]
        cij, s = x[ys.at("c_ij", corr.index)], x[ys.at("s_ij", corr.index)]
        p_from[corr.index] = corr.n0 * (corr.g0 * (cii - cij) - corr.b0 * s)
        p_to[corr.index] = corr.n0 * (corr.g0 * (cjj - cij) + corr.b0 * s)
    for line, (c, _) in enumerate(model.space.candidate_lines):
        p_from[c] += x[ys.at("P_ij", line)]
        p_to[c] += x[ys.at("P_ji", line)]
    return p_from, p_to


def acopf_solve(
    case: NetworkCase,
    plan,
    xi: Optional[np.ndarray] = None,
    options: Optional[IpmOptions] = None,
    *,
    seed: int = 0,
    starts: int = ACOPF_STARTS,
    model: Optional[TepModel] = None,
) -> AcopfSolution:
    """Rectangular ACOPF with curtailment over the base topology plus the installed lines

    PDIPM starts flat (e = 1, f = 0); if that fails, up to starts - 1 further
    attempts begin from voltages perturbed by +-5%. The first start that
    converges or stops at an acceptable iterate is kept, and `acceptable`
    tells the two apart; a sample with neither comes back with the last iterate.

    Args:
        case: Network case
        plan: Installed lines (TepPlan or binary vector)
        xi: Injection deviations, loads first then RES (zeros when omitted)
        options: PDIPM options
        seed: Seed of the perturbed starts
        starts: Total number of starts
        model: Prebuilt acopf_model(case), reused across samples
    """
    model = model or acopf_model(case)
    y_m = _plan_vector(model, plan)
    problem, _, system = fixed_topology_problem(model, y_m, xi)
    rng = np.random.default_rng(seed)
    ys = model.space.y_s

    sol = None
    used = 0
    for k in range(max(starts, 1)):
        x0 = nonconvex_start(model) if k == 0 else nonconvex_start(model, rng, START_SPREAD)
        used += 1
        sol = pdipm_solve(problem, options, x0=x0)
        if sol.usable:
            break
        logger.debug(f"[{problem.name}] start {k} ended with status {sol.status.value}")

    x = sol.x
    p_from, p_to = _corridor_flows(model, x)
    return AcopfSolution(
        e=x[ys.span("e")],
        f=x[ys.span("f")],
        p_g=x[ys.span("P_g")],
        q_g=x[ys.span("Q_g")],
        cp_d=x[ys.span("CP_d")],
        cp_r=x[ys.span("CP_r")],
        p_from=p_from,
        p_to=p_to,
        objective=sol.objective,
        converged=sol.converged,
        acceptable=sol.acceptable,
        violation=float(np.max(system.violation(x), initial=0.0)),
        starts=used,
    )


def draw_samples(box: UncertaintyBox, n_samples: int, seed: int) -> np.ndarray:
    """n_samples uniform draws from the box, one row per sample"""
    rng = np.random.default_rng(seed)
    return rng.uniform(box.lower, box.upper, size=(n_samples, box.size))


def _evaluate_chunk(
    case: NetworkCase,
    y_m: np.ndarray,
    chunk: Sequence[Tuple[int, np.ndarray]],
    opt: McsOptions,
    ipm: Optional[IpmOptions],
) -> List[McsSample]:
    model = acopf_model(case)
    threshold = opt.worst_curtailment + opt.tolerance
    rows = []
    for index, xi in chunk:
        sol = acopf_solve(case, y_m, xi, ipm, seed=opt.acopf_seed + index, model=model)
        cp_d, cp_r = float(np.sum(sol.cp_d)), float(np.sum(sol.cp_r))
        feasible = (sol.converged or sol.acceptable) and sol.violation <= opt.tolerance
        if opt.strict:
            feasible = feasible and cp_d + cp_r <= threshold
        rows.append(McsSample(
            index=index,
            xi=xi.tolist(),
            converged=sol.converged,
            acceptable=sol.acceptable,
            objective=sol.objective,
            cp_d=cp_d,
            cp_r=cp_r,
            violation=sol.violation,
            feasible=feasible,
        ))
    return rows


def mcs_verify(
    case: NetworkCase,
    plan,
    box: UncertaintyBox,
    n_samples: Optional[int] = None,
    seed: Optional[int] = None,
    options: Optional[McsOptions] = None,
    ipm: Optional[IpmOptions] = None,
) -> McsReport:
    """Monte-Carlo robustness check of a plan over uniform draws from the box

    Each sample is feasible when its ACOPF converges, or stops at an
    acceptable iterate, with every row satisfied to the tolerance; strict
    mode further caps the total curtailment at the plan's worst-case
    curtailment. Failures are data: they lower the robustness fraction
    instead of raising.
    """
    opt = options or McsOptions()
    updates = {}
    if n_samples is not None:
        updates["samples"] = n_samples
    if seed is not None:
        updates["seed"] = seed
    if updates:
        opt = opt.model_copy(update=updates)

    mode = "strict" if opt.strict else "recourse"
    if opt.samples == 0:
        logger.warning(f"MCS on '{case.name}' with no samples: robustness is undefined")
        return McsReport(samples=0, seed=opt.seed, mode=mode)

    y_m = plan.vector if isinstance(plan, TepPlan) else np.asarray(plan, dtype=float).ravel()
    samples = draw_samples(box, opt.samples, opt.seed)
    indexed = list(enumerate(samples))
    logger.info(
        f"MCS on '{case.name}': {opt.samples} samples (seed {opt.seed}, {mode} mode, "
        f"{opt.workers} worker{'s' if opt.workers > 1 else ''})"
    )

    rows: List[McsSample] = []
    step = max(opt.samples // 10, 1)
    if opt.workers > 1:
        chunks = [indexed[k:k + step] for k in range(0, len(indexed), step)]
        with ProcessPoolExecutor(max_workers=opt.workers) as pool:
            futures = [pool.submit(_evaluate_chunk, case, y_m, chunk, opt, ipm) for chunk in chunks]
            for future in as_completed(futures):
                rows.extend(future.result())
                logger.info(f"MCS progress: {len(rows)}/{opt.samples}")
    else:
        for k in range(0, len(indexed), step):
            rows.extend(_evaluate_chunk(case, y_m, indexed[k:k + step], opt, ipm))
            logger.info(f"MCS progress: {len(rows)}/{opt.samples}")
    rows.sort(key=lambda row: row.index)

    failures = [row.index for row in rows if not row.feasible]
    for row in rows:
        if row.acceptable:
            logger.info(f"MCS sample {row.index}: ACOPF met only the acceptable tolerance")
        elif not row.converged:
            logger.warning(f"MCS sample {row.index}: ACOPF did not converge")
    report = McsReport(
        samples=opt.samples,
        seed=opt.seed,
        mode=mode,
        converged=sum(row.converged for row in rows),
        feasible=sum(row.feasible for row in rows),
        robustness=sum(row.feasible for row in rows) / opt.samples,
        worst_violation=max(row.violation for row in rows),
        failures=failures,
        rows=rows,
    )
    logger.info(
        f"MCS on '{case.name}': {report.feasible}/{report.samples} feasible, "
        f"{report.converged} converged, robustness {report.robustness:.4f}"
    )
    return report


def check_worst_case_dominance(
    case: NetworkCase,
    plan,
    box: UncertaintyBox,
    xi_worst: np.ndarray,
    n: int = 50,
    seed: int = 0,
    tolerance: float = 1e-3,
    options: Optional[IpmOptions] = None,
) -> DominanceReport:
    """ACOPF cost at random draws against the cost at the worst-case vertex

    The worst case dominates when every sampled cost stays within
    tolerance (relative) of it.
    """
    model = acopf_model(case)
    worst = acopf_solve(case, plan, xi_worst, options, model=model).objective
    costs = [
        acopf_solve(case, plan, xi, options, seed=seed + k, model=model).objective
        for k, xi in enumerate(draw_samples(box, n, seed))
    ]
    limit = worst + tolerance * max(abs(worst), 1.0)
    dominated = all(cost <= limit for cost in costs)
    if not dominated:
        logger.warning(
            f"Worst case on '{case.name}' is exceeded: {max(costs):.6g} > {worst:.6g} $/h"
        )
    return DominanceReport(worst_cost=worst, sample_costs=costs, tolerance=tolerance, dominated=dominated)


def optimality_gap_report(
    case: NetworkCase,
    plan,
    starts: int = 5,
    seed: int = 0,
    options: Optional[IpmOptions] = None,
    name: str = "",
) -> OptimalityGapRecord:
    """Best local optimum of the non-convex TEP at a fixed plan against its relaxation"""
    model = acopf_model(case)
    y_m = _plan_vector(model, plan)
    problem, _, _ = fixed_topology_problem(model, y_m)
    rng = np.random.default_rng(seed)
    best = None
    for k in range(starts):
        x0 = nonconvex_start(model) if k == 0 else nonconvex_start(model, rng, START_SPREAD)
        sol = pdipm_solve(problem, options, x0=x0)
        if sol.usable and (best is None or sol.objective < best):
            best = sol.objective
    if best is None:
        best = float("nan")
        logger.warning(f"No start of the non-convex model converged on '{case.name}'")

    compact = robust_model(case)
    relaxed = solve_relaxed_opf(compact, y_m, options=options).objective
    gap = abs(best - relaxed) / max(abs(best), 1e-12)
    record = OptimalityGapRecord(
        system=case.name,
        topology=name or make_plan(compact, y_m).describe(),
        nonconvex=case.annualize(best),
        relaxed=case.annualize(relaxed),
        relative_gap=gap,
        starts=starts,
    )
    logger.info(
        f"Optimality gap on '{case.name}' [{record.topology}]: non-convex {record.nonconvex:.8g}, "
        f"relaxed {record.relaxed:.8g} $/yr, relative gap {gap:.3e}"
    )
    return record
