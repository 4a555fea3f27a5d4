"""Utility modules for rtep"""

from .report_utils import (
    write_json,
    write_table,
    read_plan,
    trace_table,
    mcs_table,
    sweep_table,
    gap_table
)

__all__ = [
    "write_json",
    "write_table",
    "read_plan",
    "trace_table",
    "mcs_table",
    "sweep_table",
    "gap_table"
]
