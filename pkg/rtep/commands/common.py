"""Helpers shared by the subcommands"""

import logging
from pathlib import Path

from rtep.core.config import RunConfig
from rtep.core.exceptions import ConvergenceError
from rtep.models.network import NetworkCase
from rtep.models.results import BendersOptions, BendersResult, DualSlaveOptions
from rtep.services.benders import cost_breakdown, robust_model, worst_case_report
from rtep.services.netcase import build_uncertainty_box, resolve_case
from rtep.utils.report_utils import ensure_dir, trace_table, write_json, write_table

logger = logging.getLogger(__name__)


def load_case(config: RunConfig) -> NetworkCase:
    return resolve_case(config.case)


def benders_options(config: RunConfig) -> BendersOptions:
    """Outer-loop options from the run configuration"""
    return BendersOptions(
        tolerance=config.tolerance,
        max_iters=config.max_iters,
        init_topology=config.init_topology,
        slave=DualSlaveOptions(method=config.dual_slave),
    )


def write_solve_artifacts(case: NetworkCase, result: BendersResult, out: Path) -> None:
    """plan.json, trace.csv, worst_case.json and costs.json of one solve"""
    out = ensure_dir(out)
    model = robust_model(case, build_uncertainty_box(case, result.u_d, result.u_r))
    write_json(result.plan, out / "plan.json")
    write_table(trace_table(result.state, case, result.plan.labels), out / "trace.csv")
    report = worst_case_report(model, result)
    write_json(report, out / "worst_case.json")
    costs = cost_breakdown(model, result.plan, result.worst_case.y_s)
    write_json(costs, out / "costs.json")
    logger.info(
        f"Plan [{result.plan.describe()}]: investment {costs.investment:.6g}, operating {costs.operating:.6g}, "
        f"total {costs.total:.6g} $/yr"
    )
    curtailed = {bus: v for bus, v in report.cp_d.items() if v > 1e-6}
    if curtailed:
        logger.info(f"Worst-case load curtailment [pu]: {curtailed}")


def require_converged(result: BendersResult) -> None:
    if not result.state.converged:
        raise ConvergenceError(result.state.iteration, result.state.gap, result.state)
