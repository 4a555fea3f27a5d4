"""Data models for rtep"""

from .network import (
    Bus,
    Generator,
    ExistingCorridor,
    CandidateCorridor,
    Corridor,
    NetworkCase,
    UncertaintyBox
)

from .results import (
    TepPlan,
    PrimalSlaveSolution,
    DualSlaveSolution,
    BendersCut,
    BendersState,
    BendersResult,
    BendersOptions,
    DualSlaveOptions,
    GapRecord,
    OptimalityGapRecord,
    CostBreakdown,
    AcopfSolution,
    McsOptions,
    McsReport,
    SweepRow
)

__all__ = [
    # Case data
    "Bus",
    "Generator",
    "ExistingCorridor",
    "CandidateCorridor",
    "Corridor",
    "NetworkCase",
    "UncertaintyBox",

    # Plans, solutions and reports
    "TepPlan",
    "PrimalSlaveSolution",
    "DualSlaveSolution",
    "BendersCut",
    "BendersState",
    "BendersResult",
    "BendersOptions",
    "DualSlaveOptions",
    "GapRecord",
    "OptimalityGapRecord",
    "CostBreakdown",
    "AcopfSolution",
    "McsOptions",
    "McsReport",
    "SweepRow"
]
