"""dualgap: primal against dual slave objectives at fixed topologies"""

import logging
from typing import List, Tuple

import numpy as np

from rtep.core.config import RunConfig
from rtep.core.exceptions import ConfigError
from rtep.models.network import NetworkCase
from rtep.services.benders import duality_gap_report
from rtep.services.netcase import build_uncertainty_box
from rtep.services.verify import optimality_gap_report
from rtep.utils.report_utils import ensure_dir, gap_table, read_plan, write_table

from .common import load_case

logger = logging.getLogger(__name__)


def _topologies(config: RunConfig, case: NetworkCase) -> List[Tuple[str, np.ndarray]]:
    n = len(case.candidate_lines)
    base = ("base", np.zeros(n))
    augmented = ("all candidates", np.ones(n))
    if config.topology == "base":
        return [base]
    if config.topology == "all":
        return [base, augmented]
    if config.plan is None or not config.plan.is_file():
        raise ConfigError(f"topology 'plan' needs an existing plan file, got {config.plan}")
    plan = read_plan(config.plan)
    plan.check_against(case)
    return [(f"plan [{plan.describe()}]", plan.vector)]


def cmd_dualgap(config: RunConfig) -> int:
    """Write gaps.csv with one duality-gap row per topology (and optimality-gap rows on request)"""
    case = load_case(config)
    box = build_uncertainty_box(case, config.u_d, config.u_r)
    records, optimality = [], []
    for name, y_m in _topologies(config, case):
        records.append(duality_gap_report(case, y_m, box=box, name=name))
        if config.optimality_gap:
            optimality.append(optimality_gap_report(case, y_m, seed=config.seed, name=name))
    write_table(gap_table(records, optimality), ensure_dir(config.out) / "gaps.csv")
    return 0
