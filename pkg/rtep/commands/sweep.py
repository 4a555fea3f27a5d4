"""sweep: robust cost against the uncertainty level"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Tuple

import numpy as np

from rtep.core.config import RunConfig
from rtep.models.compact import RelaxedVariableSpace
from rtep.models.network import NetworkCase
from rtep.models.results import BendersOptions, BendersResult, SweepRow
from rtep.services.benders import benders_solve, robust_model, solve_deterministic
from rtep.services.netcase import build_uncertainty_box
from rtep.utils.report_utils import ensure_dir, sweep_table, write_table

from .common import benders_options, load_case

logger = logging.getLogger(__name__)


def _solve_point(case: NetworkCase, u_d: float, u_r: float, options: BendersOptions) -> BendersResult:
    return benders_solve(case, build_uncertainty_box(case, u_d, u_r), options)


def sweep_grid(config: RunConfig) -> List[Tuple[float, float]]:
    """(u_d, u_r) points: the u_r grid at fixed u_d when given, else the u_d grid at fixed u_r"""
    if config.ur_values:
        return [(config.u_d, u_r) for u_r in config.ur_values]
    return [(u_d, config.u_r) for u_d in config.ud_values]


def sweep_row(case: NetworkCase, space: RelaxedVariableSpace, result: BendersResult, reference: float) -> SweepRow:
    """One table row; reference is the deterministic total [$/yr]"""
    y_s = result.worst_case.y_s
    ys = space.y_s
    operating = case.annualize(result.worst_case.sd)
    total = result.plan.investment_cost + operating
    increase = 100.0 * (total / reference - 1.0) if reference > 0 else float("nan")
    return SweepRow(
        u_d=result.u_d,
        u_r=result.u_r,
        plan=result.plan.describe(),
        investment=result.plan.investment_cost,
        operating=operating,
        total=total,
        increase=increase,
        cp_d=float(np.sum(y_s[ys.span("CP_d")])) if y_s.size else 0.0,
        cp_r=float(np.sum(y_s[ys.span("CP_r")])) if y_s.size else 0.0,
        iterations=result.state.iteration,
        converged=result.state.converged,
    )


def cmd_sweep(config: RunConfig) -> int:
    """Robust solves over a grid of uncertainty levels, written to sweep.csv

    The deterministic solve is the reference of the increase column.
    Non-converged points stay in the table with converged False.
    """
    case = load_case(config)
    options = benders_options(config)
    space = robust_model(case).space
    reference = solve_deterministic(case, options).total_cost
    logger.info(f"Deterministic reference: {reference:.6g} $/yr")

    grid = sweep_grid(config)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(
                _solve_point,
                [case] * len(grid), [u_d for u_d, _ in grid], [u_r for _, u_r in grid], [options] * len(grid),
            ))
    else:
        results = [_solve_point(case, u_d, u_r, options) for u_d, u_r in grid]

    rows = [sweep_row(case, space, result, reference) for result in results]
    for row in rows:
        if not row.converged:
            logger.warning(f"Sweep point u_d={row.u_d:g}%, u_r={row.u_r:g}% did not converge")
        logger.info(
            f"u_d={row.u_d:g}%, u_r={row.u_r:g}%: total {row.total:.6g} $/yr (+{row.increase:.2f}%), "
            f"plan [{row.plan}], CP_d {row.cp_d:.4g} pu"
        )
    write_table(sweep_table(rows), ensure_dir(config.out) / "sweep.csv")
    return 0
