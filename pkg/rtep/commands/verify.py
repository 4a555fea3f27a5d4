"""verify: Monte-Carlo robustness check of a plan file"""

import logging

import numpy as np

from rtep.core.config import RunConfig
from rtep.core.exceptions import ConfigError
from rtep.models.results import DualSlaveOptions, McsOptions
from rtep.services.benders import robust_model
from rtep.services.netcase import build_uncertainty_box
from rtep.services.slave import solve_dual_slave
from rtep.services.verify import mcs_verify
from rtep.utils.report_utils import ensure_dir, mcs_table, read_plan, write_json, write_table

from .common import load_case

logger = logging.getLogger(__name__)


def cmd_verify(config: RunConfig) -> int:
    """Sample the box, solve the ACOPF per sample and report the robust fraction

    Returns:
        int: 0 when every sample is feasible in the configured mode, else 1

    Raises:
        ConfigError: If the plan file is missing or does not fit the case
    """
    if config.plan is None or not config.plan.is_file():
        raise ConfigError(f"plan file not found: {config.plan}")
    case = load_case(config)
    plan = read_plan(config.plan)
    plan.check_against(case)
    box = build_uncertainty_box(case, config.u_d, config.u_r)

    worst_curtailment = 0.0
    if config.strict:
        model = robust_model(case, box)
        worst = solve_dual_slave(model, plan.vector, DualSlaveOptions(method=config.dual_slave))
        ys = model.space.y_s
        worst_curtailment = float(np.sum(worst.y_s[ys.span("CP_d")]) + np.sum(worst.y_s[ys.span("CP_r")]))
        logger.info(f"Worst-case curtailment of the plan: {worst_curtailment:.6g} pu")

    options = McsOptions(
        samples=config.samples,
        seed=config.seed,
        strict=config.strict,
        worst_curtailment=worst_curtailment,
        workers=config.workers,
    )
    report = mcs_verify(case, plan, box, options=options)

    out = ensure_dir(config.out)
    write_table(mcs_table(report, case), out / "mcs.csv")
    write_json(report.model_copy(update={"rows": []}), out / "mcs_summary.json")

    if report.robustness is None:
        logger.warning("No samples drawn; nothing to verify")
        return 0
    if not report.robust:
        logger.error(
            f"Plan is not robust in {report.mode} mode: {len(report.failures)} of {report.samples} samples failed"
        )
        return 1
    return 0
