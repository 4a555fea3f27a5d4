"""Core configuration, exceptions and logging for rtep"""

from .config import settings, RunConfig
from .exceptions import (
    RtepException,
    CaseParseError,
    CaseValidationError,
    UncertaintyError,
    AssemblyError,
    SolverError,
    IpmFailure,
    LpFailure,
    SlaveSolveError,
    ConvergenceError,
    ConfigError
)
from .log import configure_logging

__all__ = [
    "settings",
    "RunConfig",
    "configure_logging",
    "RtepException",
    "CaseParseError",
    "CaseValidationError",
    "UncertaintyError",
    "AssemblyError",
    "SolverError",
    "IpmFailure",
    "LpFailure",
    "SlaveSolveError",
    "ConvergenceError",
    "ConfigError"
]
