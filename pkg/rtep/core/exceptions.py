"""Custom exceptions for rtep"""

from typing import Any, Dict, Optional


class RtepException(Exception):
    """Base exception for rtep

    ``exit_code`` is the process status the CLI returns when the exception
    escapes a command.
    """

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class CaseParseError(RtepException):
    """Exception raised when a case document cannot be parsed"""

    exit_code = 3

    def __init__(
        self,
        path: str,
        detail: str,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        self.path = path
        self.line = line
        self.field = field
        location = path
        if line is not None:
            location += f":{line}"
        if field:
            location += f" [{field}]"
        super().__init__(f"Case parse error at {location}: {detail}")


class CaseValidationError(RtepException):
    """Exception raised when a case violates a data-model invariant"""

    exit_code = 3

    def __init__(self, field: str, detail: str):
        self.field = field
        super().__init__(f"Case validation error in '{field}': {detail}")


class UncertaintyError(RtepException):
    """Exception raised for an invalid uncertainty box"""

    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(f"Uncertainty error: {detail}")


class AssemblyError(RtepException):
    """Exception raised when compact model blocks are inconsistent"""

    def __init__(self, detail: str):
        super().__init__(f"Model assembly error: {detail}")


class SolverError(RtepException):
    """Exception raised when a numerical solver fails"""

    exit_code = 4

    def __init__(
        self,
        solver: str,
        detail: str,
        diagnostics: Optional[Dict[str, Any]] = None,
    ):
        self.solver = solver
        self.diagnostics = diagnostics or {}
        message = f"{solver} failed: {detail}"
        super().__init__(message)


class IpmFailure(SolverError):
    """Exception raised when the interior-point method cannot produce a KKT point"""

    def __init__(self, detail: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__("PDIPM", detail, diagnostics)


class LpFailure(SolverError):
    """Exception raised when the LP engine returns an unexpected status"""

    def __init__(self, detail: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__("LP", detail, diagnostics)


class SlaveSolveError(SolverError):
    """Exception raised when a Benders slave sub-problem cannot be solved"""

    def __init__(self, detail: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__("Slave sub-problem", detail, diagnostics)


class ConvergenceError(RtepException):
    """Exception raised when Benders stops at its iteration cap"""

    exit_code = 5

    def __init__(self, iterations: int, gap: float, state: Any = None):
        self.iterations = iterations
        self.gap = gap
        self.state = state
        super().__init__(
            f"Benders decomposition did not converge after {iterations} iterations "
            f"(relative gap {gap:.3e})"
        )


class ConfigError(RtepException):
    """Exception raised for an invalid run configuration"""

    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(f"Configuration error: {detail}")
