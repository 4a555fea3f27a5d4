"""solve-det and solve-robust"""

import logging

from rtep.core.config import RunConfig
from rtep.services.benders import benders_solve, solve_deterministic
from rtep.services.netcase import build_uncertainty_box

from .common import benders_options, load_case, require_converged, write_solve_artifacts

logger = logging.getLogger(__name__)


def cmd_solve_det(config: RunConfig) -> int:
    """Deterministic AC TEP: nominal loads, RES at rated output"""
    case = load_case(config)
    result = solve_deterministic(case, benders_options(config))
    write_solve_artifacts(case, result, config.out)
    require_converged(result)
    return 0


def cmd_solve_robust(config: RunConfig) -> int:
    """Robust AC TEP over the (u_d, u_r) box

    Returns:
        int: 0 on a converged run

    Raises:
        ConvergenceError: If the iteration cap is reached (artifacts are still written)
    """
    case = load_case(config)
    box = build_uncertainty_box(case, config.u_d, config.u_r)
    result = benders_solve(case, box, benders_options(config))
    write_solve_artifacts(case, result, config.out)
    require_converged(result)
    return 0
