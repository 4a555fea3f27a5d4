"""Problem, option and solution models shared by the numerical solvers"""

from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rtep.core.config import settings


class SolveStatus(str, Enum):
    """Termination status of a continuous solve"""
    CONVERGED = "converged"
    ACCEPTABLE = "acceptable"
    MAX_ITER = "max-iter"
    NUMERICAL_FAILURE = "numerical-failure"


class LpStatus(str, Enum):
    """Termination status of an LP or MILP solve"""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    GAP_LIMIT = "gap-limit"
    FAILED = "failed"


def _empty() -> np.ndarray:
    return np.zeros(0)


class IpmOptions(BaseModel):
    """Primal-dual interior-point options"""

    tolerance: float = Field(default_factory=lambda: settings.ipm_tolerance, gt=0)
    acceptable_tolerance: float = Field(default_factory=lambda: settings.ipm_acceptable_tolerance, gt=0)
    max_iter: int = Field(default_factory=lambda: settings.ipm_max_iter, ge=1)
    step_fraction: float = Field(0.995, gt=0, lt=1, description="Fraction-to-boundary factor")
    sigma: float = Field(0.1, gt=0, lt=1, description="Centering parameter without predictor-corrector")
    predictor_corrector: bool = Field(True, description="Mehrotra predictor-corrector steps")
    z0: float = Field(1.0, gt=0, description="Lower limit on initial slacks")
    max_regularization: float = Field(1e10, gt=0)
    log_iterations: bool = Field(True, description="Emit the per-iteration DEBUG log")

    @model_validator(mode="after")
    def validate_tolerances(self):
        if self.acceptable_tolerance < self.tolerance:
            raise ValueError("acceptable_tolerance must not be tighter than tolerance")
        return self


class NlpProblem(BaseModel):
    """Smooth NLP: min f(x) s.t. g(x) = 0, h(x) <= 0, xmin <= x <= xmax

    Callbacks:
        objective(x) -> (f, df)
        constraints(x) -> (h, g, dh, dg) with sparse Jacobians of shape (m, n)
        hessian(x, lam, mu, cost_mult) -> sparse Hessian of the Lagrangian
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int = Field(..., ge=1)
    n_eq: int = Field(0, ge=0)
    n_ineq: int = Field(0, ge=0)
    x0: np.ndarray
    objective: Callable[[np.ndarray], Any]
    constraints: Callable[[np.ndarray], Any]
    hessian: Callable[..., Any]
    xmin: np.ndarray = Field(default_factory=_empty)
    xmax: np.ndarray = Field(default_factory=_empty)
    name: str = "nlp"

    @model_validator(mode="after")
    def validate_dimensions(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.n,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        xmin = np.full(self.n, -np.inf) if self.xmin.size == 0 else np.asarray(self.xmin, dtype=float)
        xmax = np.full(self.n, np.inf) if self.xmax.size == 0 else np.asarray(self.xmax, dtype=float)
        if xmin.shape != (self.n,) or xmax.shape != (self.n,):
            raise ValueError("variable bounds must have length n")
        if np.any(xmin > xmax):
            raise ValueError("xmin must not exceed xmax")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xmin", xmin)
        object.__setattr__(self, "xmax", xmax)
        return self


class KktResiduals(BaseModel):
    """Infinity norms of the first-order optimality conditions"""

    stationarity: float
    feasibility: float
    complementarity: float
    dual_sign: float = Field(0.0, description="Largest negative inequality multiplier, as a positive number")

    def within(self, tol: float) -> bool:
        return max(self.stationarity, self.feasibility, self.complementarity, self.dual_sign) <= tol


class NlpSolution(BaseModel):
    """Result of pdipm_solve"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    lam: np.ndarray = Field(default_factory=_empty, description="Equality multipliers")
    mu: np.ndarray = Field(default_factory=_empty, description="Inequality multipliers")
    mu_lower: np.ndarray = Field(default_factory=_empty, description="Lower-bound multipliers")
    mu_upper: np.ndarray = Field(default_factory=_empty, description="Upper-bound multipliers")
    objective: float
    status: SolveStatus
    iterations: int = 0
    residuals: Optional[KktResiduals] = None
    history: List[Dict[str, float]] = Field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        """KKT residuals within the strict tolerance"""
        return self.status == SolveStatus.CONVERGED

    @property
    def acceptable(self) -> bool:
        """Best iterate only met the acceptable tolerance before the solve stopped"""
        return self.status == SolveStatus.ACCEPTABLE

    @property
    def usable(self) -> bool:
        return self.status in (SolveStatus.CONVERGED, SolveStatus.ACCEPTABLE)


class LpProblem(BaseModel):
    """min c.x s.t. A x (<= | =) b, lb <= x <= ub"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray = Field(..., description="'<' or '=' per row")
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    constant: float = 0.0

    @field_validator("A", mode="before")
    @classmethod
    def to_csr(cls, v):
        return sp.csr_matrix(v)

    @model_validator(mode="after")
    def validate_dimensions(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("c, lb and ub must have one entry per column of A")
        if self.b.shape != (m,) or self.senses.shape != (m,):
            raise ValueError("b and senses must have one entry per row of A")
        if not set(np.unique(self.senses)) <= {"<", "="}:
            raise ValueError("row senses must be '<' or '='")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")
        return self

    @property
    def n(self) -> int:
        return self.A.shape[1]


class LpSolution(BaseModel):
    """LP result; duals follow L = c.x + y.(A x - b), so y >= 0 on '<' rows"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: LpStatus
    x: np.ndarray = Field(default_factory=_empty)
    objective: float = float("nan")
    row_duals: np.ndarray = Field(default_factory=_empty)
    lower_duals: np.ndarray = Field(default_factory=_empty)
    upper_duals: np.ndarray = Field(default_factory=_empty)
    message: str = ""


class MilpProblem(BaseModel):
    """LP plus a set of binary columns"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    lp: LpProblem
    binaries: np.ndarray

    @model_validator(mode="after")
    def validate_binaries(self):
        idx = np.asarray(self.binaries, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.lp.n):
            raise ValueError("binary index out of range")
        if idx.size and (np.any(self.lp.lb[idx] < 0) or np.any(self.lp.ub[idx] > 1)):
            raise ValueError("binary columns must have bounds within [0, 1]")
        object.__setattr__(self, "binaries", idx)
        return self


class BranchAndBoundOptions(BaseModel):
    """Best-bound branch-and-bound options"""

    node_limit: int = Field(default_factory=lambda: settings.bb_node_limit, ge=1)
    absolute_gap: float = Field(1e-9, ge=0)
    integrality_tolerance: float = Field(1e-6, gt=0, lt=0.5)
    log_nodes: bool = False


class MilpSolution(BaseModel):
    """bb_solve result"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: LpStatus
    x: np.ndarray = Field(default_factory=_empty)
    objective: float = float("inf")
    bound: float = float("-inf")
    gap: float = float("inf")
    nodes: int = 0
