"""Service modules for rtep"""

from .netcase import parse_case, load_bundled_case, resolve_case, build_uncertainty_box
from .formulation import build_deterministic_tep, build_relaxed_tep, build_uncertain_tep, assemble_compact
from .benders import benders_solve, solve_deterministic, duality_gap_report
from .verify import acopf_solve, mcs_verify

__all__ = [
    "parse_case",
    "load_bundled_case",
    "resolve_case",
    "build_uncertainty_box",
    "build_deterministic_tep",
    "build_relaxed_tep",
    "build_uncertain_tep",
    "assemble_compact",
    "benders_solve",
    "solve_deterministic",
    "duality_gap_report",
    "acopf_solve",
    "mcs_verify"
]
