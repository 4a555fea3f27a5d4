"""Slave sub-problems of the robust TEP

The primal slave at a fixed plan and a fixed xi is the relaxed OPF with the
cone written directly in y_s (D = -U y_s). Its KKT multipliers, split back
onto the compact rows, are a point of the dual slave: stationarity in y_s is
the dual equality, lambda_cs follows from the cone link, and the objective
of the dual at that point is

    SD = F_c + (T y_m - r)'z_ms - t_e'lambda - t_ie'z + Psi'xi,
    Psi = J_e'lambda + J_ie'z.

solve_dual_slave maximizes SD over the dual variables and the box together
with the dual slave NLP of rtep.services.dual_nlp, snaps xi to the vertex
picked by the sign of Psi and re-solves the primal slave there for the
dispatch. The vertex search (enumeration on small boxes, vertex ascent on
larger ones) is kept as the fallback and as an independent check: a snapped
SD is a lower bound on the slave optimum at the snapped vertex, Psi being a
subgradient of the convex optimal-value function.
"""

import itertools
import logging
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np

from rtep.core.exceptions import AssemblyError, SlaveSolveError
from rtep.models.compact import CompactRobustModel
from rtep.models.network import UncertaintyBox
from rtep.models.results import (
    DualResiduals,
    DualSlaveOptions,
    DualSlaveSolution,
    PrimalSlaveSolution,
    SlaveMultipliers,
    TepPlan,
)
from rtep.models.solver import IpmOptions
from rtep.services.dual_nlp import solve_dual_nlp
from rtep.services.formulation import MergedRows, merge_pairs
from rtep.services.ipm import pdipm_solve
from rtep.services.quadratic import EQUALITY_WIDTH, QuadraticRows, QuadraticSystem, build_nlp

logger = logging.getLogger(__name__)

PlanLike = Union[TepPlan, np.ndarray, List[float]]


class _SlaveLayout(NamedTuple):
    merged: Dict[str, MergedRows]
    offsets: Dict[str, int]
    cone_rows: np.ndarray


def plan_vector(model: CompactRobustModel, plan: PlanLike) -> np.ndarray:
    """Binary vector of a plan, checked against the model"""
    y = plan.vector if isinstance(plan, TepPlan) else np.asarray(plan, dtype=float).ravel()
    if y.shape != (model.n_m,):
        raise AssemblyError(f"plan has {y.size} entries, expected {model.n_m}")
    return y


def _xi_vector(model: CompactRobustModel, xi: Optional[np.ndarray]) -> np.ndarray:
    if xi is None:
        return np.zeros(model.n_xi)
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.shape != (model.n_xi,):
        raise AssemblyError(f"xi has {xi.size} entries, expected {model.n_xi}")
    return xi


def slave_system(model: CompactRobustModel, y_m: np.ndarray, xi: np.ndarray):
    """QuadraticSystem of the primal slave at (y_m, xi) and its row layout

    Raises:
        SlaveSolveError: If the bounds of a row pair cross (e.g. a load pushed below zero)
    """
    rows = QuadraticRows(model.n_s)
    merged: Dict[str, MergedRows] = {}
    offsets: Dict[str, int] = {}
    blocks = {
        "TG": (model.G, model.r - model.T @ y_m),
        "Be": (model.B_e, model.t_e - model.J_e @ xi),
        "Bie": (model.B_ie, model.t_ie - model.J_ie @ xi),
    }
    for name, (Y, rhs) in blocks.items():
        block = merge_pairs(Y, rhs, model.row_info[name])
        crossed = np.flatnonzero(block.lo > block.hi + EQUALITY_WIDTH)
        if crossed.size:
            k = crossed[0]
            raise SlaveSolveError(
                f"row '{block.labels[k]}' has an empty interval [{block.lo[k]:.6g}, {block.hi[k]:.6g}]",
                {"block": name, "row": block.labels[k]},
            )
        offsets[name] = rows.m
        rows.add_linear_block(block.A, block.lo, block.hi, block.labels)
        merged[name] = block

    U = model.U.tocsr()
    weights = np.diag(model.H)
    cone_rows = []
    for c, label in enumerate(model.cone_labels):
        vectors = []
        for k in range(4):
            row = U.getrow(4 * c + k)
            vectors.append(list(zip(row.indices.tolist(), row.data.tolist())))
        cone_rows.append(rows.add_square_form(vectors, weights, hi=0.0, label=f"cone[{label}]"))
    return rows.build(), _SlaveLayout(merged, offsets, np.asarray(cone_rows, dtype=int))


def slave_start(
    model: CompactRobustModel,
    rng: Optional[np.random.Generator] = None,
    spread: float = 0.05,
) -> np.ndarray:
    """Flat start: c_ii = 1, c_ij = 0.95, dispatch at mid-range, no curtailment"""
    ys = model.space.y_s
    x = np.zeros(model.n_s)
    x[ys.span("c_ii")] = 1.0
    x[ys.span("c_ij")] = 0.95
    for g_idx, gen in enumerate(model.case.generators):
        x[ys.at("P_g", g_idx)] = 0.5 * (gen.p_min + gen.p_max)
        x[ys.at("Q_g", g_idx)] = 0.5 * (gen.q_min + gen.q_max)
    if rng is not None:
        x = x * (1.0 + rng.uniform(-spread, spread, x.size)) + 0.1 * spread * rng.uniform(-1.0, 1.0, x.size)
    return x


def _split_multipliers(model: CompactRobustModel, layout: _SlaveLayout, nu: np.ndarray) -> SlaveMultipliers:
    """Signed row multipliers -> non-negative multipliers on both rows of each pair"""
    split = {}
    for name, size in (("TG", model.r.size), ("Be", model.t_e.size), ("Bie", model.t_ie.size)):
        block = layout.merged[name]
        start = layout.offsets[name]
        seg = nu[start:start + block.upper.size]
        infos = model.row_info[name]
        z = np.zeros(size)
        for k, (up, lo) in enumerate(zip(block.upper, block.lower)):
            if infos[up].side == "equality":
                z[up] = seg[k]
                continue
            z[up] = max(seg[k], 0.0)
            if lo >= 0:
                z[lo] = max(-seg[k], 0.0)
        split[name] = z
    return SlaveMultipliers(
        z_ms=split["TG"],
        lam_e=split["Be"],
        z_ie=split["Bie"],
        z_c=np.maximum(nu[layout.cone_rows], 0.0) if layout.cone_rows.size else np.zeros(0),
    )


def cone_link_multipliers(model: CompactRobustModel, z_c: np.ndarray, y_cone: np.ndarray) -> np.ndarray:
    """lambda_cs = -2 z_c H y_cone, corridor by corridor"""
    D = y_cone.reshape(model.n_cones, 4)
    return (-2.0 * z_c[:, None] * (D @ model.H)).ravel()


def _run_ipm(
    model: CompactRobustModel,
    system: QuadraticSystem,
    options: IpmOptions,
    x0: np.ndarray,
    retry: Optional[DualSlaveOptions],
):
    problem, split = build_nlp(system, model.F_s, x0, cost_constant=model.F_c, name=f"{model.case.name}-slave")
    sol = pdipm_solve(problem, options)
    if not sol.usable and retry is not None:
        logger.warning(f"[{problem.name}] retrying from a perturbed start after status {sol.status.value}")
        rng = np.random.default_rng(retry.retry_seed)
        sol = pdipm_solve(problem, options, x0=slave_start(model, rng, retry.perturbation))
    if not sol.usable:
        diagnostics = {"status": sol.status.value, "iterations": sol.iterations, "message": sol.message}
        if sol.residuals is not None:
            diagnostics.update(sol.residuals.model_dump())
        raise SlaveSolveError(f"PDIPM ended with status {sol.status.value}", diagnostics)
    return sol, split


def solve_primal_slave(
    model: CompactRobustModel,
    plan: PlanLike,
    xi: Optional[np.ndarray] = None,
    options: Optional[IpmOptions] = None,
    retry: Optional[DualSlaveOptions] = None,
) -> PrimalSlaveSolution:
    """Relaxed OPF with curtailment at a fixed plan and a fixed xi

    Args:
        model: Compact robust model
        plan: Binary plan
        xi: Realization (zeros when omitted)
        options: PDIPM options
        retry: Perturbation settings for one retry after a failed solve

    Raises:
        SlaveSolveError: If PDIPM cannot produce a KKT point
    """
    y_m = plan_vector(model, plan)
    xi = _xi_vector(model, xi)
    system, layout = slave_system(model, y_m, xi)
    sol, split = _run_ipm(model, system, options or IpmOptions(), slave_start(model), retry)

    nu = split.row_multipliers(system.m, sol.lam, sol.mu)
    multipliers = _split_multipliers(model, layout, nu)
    y_cone = -(model.U @ sol.x)
    return PrimalSlaveSolution(
        y_s=sol.x,
        y_cone=y_cone,
        xi=xi,
        objective=sol.objective,
        multipliers=multipliers,
        lam_cs=cone_link_multipliers(model, multipliers.z_c, y_cone),
        acceptable=sol.acceptable,
        iterations=sol.iterations,
        residuals=sol.residuals,
    )


# The relaxed OPF of solve_primal_slave under another name
solve_relaxed_opf = solve_primal_slave


def _split_psi(psi: np.ndarray, limit: float):
    """Psi+ = max(Psi, 0), Psi- = max(-Psi, 0) and the entries with |Psi| above L"""
    saturated = np.flatnonzero(np.abs(psi) > limit)
    if saturated.size:
        logger.warning(
            f"|Psi| reaches {np.max(np.abs(psi)):.4g} on entries {saturated.tolist()}, above L = {limit:g}; "
            f"the dual point is outside the Psi bounds there"
        )
    return np.maximum(psi, 0.0), np.maximum(-psi, 0.0), saturated.tolist()


def dual_from_primal(
    model: CompactRobustModel,
    plan: PlanLike,
    primal: PrimalSlaveSolution,
) -> DualSlaveSolution:
    """Dual slave point built from the multipliers of a primal slave solve

    Psi is split exactly into Psi+ and Psi- and u sits at its upper bound
    Psi+ xi_max - Psi- xi_min, so sd is the objective of the dual at this
    point. Entries with |Psi| > L are listed in `saturated`.
    """
    y_m = plan_vector(model, plan)
    mult = primal.multipliers
    psi = model.J_e.T @ mult.lam_e + model.J_ie.T @ mult.z_ie
    sd_constant = float(
        model.F_c
        + (model.T @ y_m - model.r) @ mult.z_ms
        - model.t_e @ mult.lam_e
        - model.t_ie @ mult.z_ie
    )
    psi_plus, psi_minus, saturated = _split_psi(psi, model.case.big_l)
    u = psi_plus * model.box.upper - psi_minus * model.box.lower
    return DualSlaveSolution(
        z_ms=mult.z_ms,
        lam_e=mult.lam_e,
        z_ie=mult.z_ie,
        lam_cs=primal.lam_cs,
        z_c=mult.z_c,
        y_cone=primal.y_cone,
        psi=psi,
        psi_plus=psi_plus,
        psi_minus=psi_minus,
        u=u,
        xi=primal.xi,
        sd_constant=sd_constant,
        sd=sd_constant + float(u.sum()),
        y_s=primal.y_s,
        slave_cost=primal.objective,
        saturated=saturated,
        method="primal",
        status="acceptable" if primal.acceptable else "converged",
        solves=1,
    )


def dual_objective_at(sol: DualSlaveSolution, xi: np.ndarray) -> float:
    """SD of a dual point at a given realization"""
    return float(sol.sd_constant + sol.psi @ np.asarray(xi, dtype=float))


def snap_worst_case(sol: DualSlaveSolution, box: UncertaintyBox) -> DualSlaveSolution:
    """Move every xi_k to the bound picked by the sign of Psi_k and reset u

    Psi_k >= 0 selects xi_max, Psi_k < 0 selects xi_min; u_k = Psi_k xi_k,
    Psi+ and Psi- become the exact split of Psi and SD is recomputed with
    the other variables kept.
    """
    psi = np.asarray(sol.psi, dtype=float)
    xi = np.where(psi >= 0, box.upper, box.lower)
    u = psi * xi
    return sol.model_copy(update={
        "xi": xi,
        "u": u,
        "psi_plus": np.maximum(psi, 0.0),
        "psi_minus": np.maximum(-psi, 0.0),
        "sd": sol.sd_constant + float(u.sum()),
        "snapped": True,
    })


def _vertices(box: UncertaintyBox):
    nonzero = box.nonzero
    for bits in itertools.product((False, True), repeat=nonzero.size):
        xi = box.lower.copy()
        chosen = nonzero[np.array(bits, dtype=bool)]
        xi[chosen] = box.upper[chosen]
        yield xi


def _with_dispatch(
    model: CompactRobustModel,
    sol: DualSlaveSolution,
    primal: PrimalSlaveSolution,
    solves: int,
    method: str,
) -> DualSlaveSolution:
    """Attach the primal slave solve at sol.xi

    y_s and y_cone become the dispatch of that solve and z_c is refit to its
    cone point corridor by corridor (least squares on the cone link).
    """
    if not np.array_equal(primal.xi, sol.xi):
        raise AssemblyError("dispatch was solved at another realization than the dual point")
    update = {
        "y_s": primal.y_s,
        "y_cone": primal.y_cone,
        "slave_cost": primal.objective,
        "method": method,
        "solves": solves,
    }
    if model.n_cones:
        HD = primal.y_cone.reshape(model.n_cones, 4) @ model.H
        lam = sol.lam_cs.reshape(model.n_cones, 4)
        norm = np.einsum("ij,ij->i", HD, HD)
        fit = -np.einsum("ij,ij->i", lam, HD) / np.where(norm > 0, 2.0 * norm, 1.0)
        update["z_c"] = np.where(norm > 0, np.maximum(fit, 0.0), 0.0)
    return sol.model_copy(update=update)


def _ascend(
    model: CompactRobustModel,
    y_m: np.ndarray,
    primal: PrimalSlaveSolution,
    opt: DualSlaveOptions,
    solves: int = 0,
) -> DualSlaveSolution:
    """Vertex ascent from a primal slave solve

    Each step snaps the dual point of the current solve and re-solves the
    slave at the snapped vertex while its cost rises. The returned point
    always carries a solve at its own xi.
    """
    for step in range(opt.max_ascent_steps + 1):
        snapped = snap_worst_case(dual_from_primal(model, y_m, primal), model.box)
        if np.array_equal(snapped.xi, primal.xi):
            break
        trial = solve_primal_slave(model, y_m, snapped.xi, opt.ipm, retry=opt)
        solves += 1
        rising = trial.objective > primal.objective + opt.ascent_tolerance * max(1.0, abs(primal.objective))
        if not rising or not opt.vertex_ascent or step == opt.max_ascent_steps:
            return _with_dispatch(model, snapped, trial, solves, "vertex")
        logger.debug(f"Vertex ascent step {step + 1}: slave cost {primal.objective:.8g} -> {trial.objective:.8g}")
        primal = trial
    return _with_dispatch(model, snapped, primal, solves, "vertex")


def _vertex_search(
    model: CompactRobustModel,
    y_m: np.ndarray,
    opt: DualSlaveOptions,
    warm_xi: Optional[np.ndarray] = None,
) -> DualSlaveSolution:
    """Worst case over the box vertices with primal slave solves only"""
    box = model.box
    n_vertices = 2 ** box.nonzero.size

    if n_vertices <= max(opt.enumerate_limit, 1):
        best, solves = None, 0
        for xi in _vertices(box):
            primal = solve_primal_slave(model, y_m, xi, opt.ipm, retry=opt)
            solves += 1
            if best is None or primal.objective > best.objective:
                best = primal
        snapped = snap_worst_case(dual_from_primal(model, y_m, best), box)
        dispatch = best
        if not np.array_equal(snapped.xi, best.xi):
            logger.debug("Snapped vertex differs from the costliest one; solving the slave there")
            dispatch = solve_primal_slave(model, y_m, snapped.xi, opt.ipm, retry=opt)
            solves += 1
        sol = _with_dispatch(model, snapped, dispatch, solves, "vertex")
        logger.debug(f"Dual slave by enumeration of {n_vertices} vertices: SD {sol.sd:.8g}")
        return sol

    starts = [box.heavy_vertex()]
    if warm_xi is not None and not np.array_equal(np.asarray(warm_xi), starts[0]):
        starts.insert(0, _xi_vector(model, warm_xi))
    best, solves = None, 0
    for xi in starts:
        sol = _ascend(model, y_m, solve_primal_slave(model, y_m, xi, opt.ipm, retry=opt), opt, solves=1)
        solves += sol.solves
        if best is None or sol.sd > best.sd:
            best = sol
    logger.debug(f"Dual slave by vertex ascent from {len(starts)} starts: SD {best.sd:.8g} after {solves} solves")
    return best.model_copy(update={"solves": solves})


def solve_dual_slave(
    model: CompactRobustModel,
    plan: PlanLike,
    options: Optional[DualSlaveOptions] = None,
    warm_xi: Optional[np.ndarray] = None,
) -> DualSlaveSolution:
    """Worst-case dual slave at a fixed plan

    With method "nlp" the dual slave NLP starts from the dual point of a
    primal solve at the warm realization (the heavy vertex when omitted:
    loads high, RES low); xi is snapped and the primal slave re-solved there.
    If SD stays below that slave cost by more than tight_tolerance, vertex
    ascent from the re-solve may raise it (polish), and if the NLP fails the
    vertex search takes over (fallback). Method "vertex" runs the vertex
    search alone.

    Returns:
        DualSlaveSolution: Snapped dual point with the primal dispatch at its xi

    Raises:
        SlaveSolveError: If a slave solve fails after its retry, or the NLP fails with fallback off
    """
    opt = options or DualSlaveOptions()
    y_m = plan_vector(model, plan)
    if opt.method == "vertex":
        return _vertex_search(model, y_m, opt, warm_xi)

    start_xi = model.box.heavy_vertex() if warm_xi is None else _xi_vector(model, warm_xi)
    warm = solve_primal_slave(model, y_m, start_xi, opt.ipm, retry=opt)
    dual, nlp = solve_dual_nlp(
        model, y_m, options=opt.ipm, start=dual_from_primal(model, y_m, warm), complementarity=opt.complementarity,
    )
    solves = 2
    if not nlp.usable:
        if not opt.fallback:
            raise SlaveSolveError(
                f"dual slave NLP ended with status {nlp.status.value}",
                {"status": nlp.status.value, "iterations": nlp.iterations, "message": nlp.message},
            )
        logger.warning(f"Dual slave NLP ended with status {nlp.status.value}; falling back to the vertex search")
        sol = _vertex_search(model, y_m, opt, start_xi)
        return sol.model_copy(update={"solves": sol.solves + solves})

    snapped = snap_worst_case(dual, model.box)
    dispatch = warm
    if not np.array_equal(snapped.xi, warm.xi):
        dispatch = solve_primal_slave(model, y_m, snapped.xi, opt.ipm, retry=opt)
        solves += 1
    sol = _with_dispatch(model, snapped, dispatch, solves, "nlp")

    slack = dispatch.objective - sol.sd
    allowed = opt.tight_tolerance * max(1.0, abs(dispatch.objective))
    if slack > allowed:
        logger.info(f"Dual slave SD {sol.sd:.8g} is {slack:.3g} $/h below the slave cost at its xi")
        if opt.polish:
            polished = _ascend(model, y_m, dispatch, opt)
            total = sol.solves + polished.solves
            sol = polished if polished.sd > sol.sd else sol
            sol = sol.model_copy(update={"solves": total})
    elif slack < -allowed:
        logger.warning(f"Dual slave SD {sol.sd:.8g} exceeds the slave cost {dispatch.objective:.8g} at its xi")
    logger.debug(f"Dual slave by {sol.method}: SD {sol.sd:.8g} after {sol.solves} solves")
    return sol


def dual_residuals(
    model: CompactRobustModel,
    plan: PlanLike,
    sol: DualSlaveSolution,
    box: Optional[UncertaintyBox] = None,
) -> DualResiduals:
    """Residuals of the dual-slave constraints at a dual point (over the model's box when omitted)"""
    plan_vector(model, plan)
    stationarity = (
        model.F_s
        + model.G.T @ sol.z_ms
        + model.B_e.T @ sol.lam_e
        + model.B_ie.T @ sol.z_ie
        + model.U.T @ sol.lam_cs
    )
    if model.n_cones:
        D = sol.y_cone.reshape(model.n_cones, 4)
        link = sol.lam_cs.reshape(model.n_cones, 4) + 2.0 * sol.z_c[:, None] * (D @ model.H)
        cone_link = float(np.max(np.abs(link)))
    else:
        cone_link = 0.0
    psi = model.J_e.T @ sol.lam_e + model.J_ie.T @ sol.z_ie
    box = box or model.box
    u_cap = sol.psi_plus * box.upper - sol.psi_minus * box.lower
    u_floor = sol.psi_plus * box.lower - sol.psi_minus * box.upper
    split = np.concatenate([sol.psi_plus, sol.psi_minus])
    negatives = np.concatenate([sol.z_ms, sol.z_ie, sol.z_c, split])

    def norm(v):
        return float(np.max(np.abs(v))) if np.size(v) else 0.0

    def excess(v):
        return float(max(0.0, np.max(v))) if np.size(v) else 0.0

    return DualResiduals(
        stationarity=norm(stationarity),
        cone_link=cone_link,
        psi_split=norm(sol.psi_plus - sol.psi_minus - psi),
        psi_bounds=excess(split - model.case.big_l),
        u_bounds=max(excess(sol.u - u_cap), excess(u_floor - sol.u)),
        sign=excess(-negatives),
    )
