"""Plans, slave solutions, Benders state and verification reports"""

from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from rtep.core.config import settings
from rtep.core.exceptions import ConfigError
from rtep.models.network import NetworkCase
from rtep.models.solver import BranchAndBoundOptions, IpmOptions, KktResiduals


def _empty() -> np.ndarray:
    return np.zeros(0)


class TepPlan(BaseModel):
    """Binary installation vector over the candidate lines"""

    case: str = ""
    y_m: List[int] = Field(default_factory=list, description="x_ij^k per candidate line")
    labels: List[str] = Field(default_factory=list, description="'from-to#k' per candidate line")
    investment_cost: float = Field(0.0, description="F_m'y_m scaled by the annualization [$/yr]")

    @field_validator("y_m", mode="before")
    @classmethod
    def round_binaries(cls, v):
        values = [int(round(float(x))) for x in np.asarray(v, dtype=float).ravel()]
        if any(x not in (0, 1) for x in values):
            raise ValueError("plan entries must be 0 or 1")
        return values

    @model_validator(mode="after")
    def validate_labels(self):
        if self.labels and len(self.labels) != len(self.y_m):
            raise ValueError("labels and y_m must have the same length")
        return self

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.y_m, dtype=float)

    def installed(self) -> Dict[str, int]:
        """Corridor label -> number of installed lines"""
        counts: Dict[str, int] = {}
        for label, x in zip(self.labels, self.y_m):
            corridor = label.split("#")[0]
            counts[corridor] = counts.get(corridor, 0) + x
        return {k: v for k, v in counts.items() if v}

    def describe(self) -> str:
        installed = self.installed()
        if not installed:
            return "none"
        return ", ".join(f"n_{k}={v}" for k, v in installed.items())

    def check_against(self, case: NetworkCase) -> None:
        """Raise ConfigError unless the plan fits the case and respects the installation order"""
        lines = case.candidate_lines
        if len(self.y_m) != len(lines):
            raise ConfigError(f"plan has {len(self.y_m)} entries, case '{case.name}' has {len(lines)} candidate lines")
        for x, (c, k) in enumerate(lines):
            if k > 1 and self.y_m[x] > self.y_m[x - 1]:
                raise ConfigError(f"plan installs line {k} of corridor {case.corridors[c].label} before line {k - 1}")


class SlaveMultipliers(BaseModel):
    """Signed multipliers of the slave rows, split back onto the compact rows"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    z_ms: np.ndarray = Field(default_factory=_empty, description="T/G rows, >= 0")
    lam_e: np.ndarray = Field(default_factory=_empty, description="B_e rows, free")
    z_ie: np.ndarray = Field(default_factory=_empty, description="B_ie rows, >= 0")
    z_c: np.ndarray = Field(default_factory=_empty, description="cone rows, >= 0")


class PrimalSlaveSolution(BaseModel):
    """Relaxed OPF optimum at fixed plan and fixed xi"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    y_s: np.ndarray
    y_cone: np.ndarray
    xi: np.ndarray
    objective: float = Field(..., description="F_s'y_s + F_c [$/h]")
    multipliers: SlaveMultipliers
    lam_cs: np.ndarray = Field(default_factory=_empty, description="Cone-link multipliers, -2 z_c H y_cone")
    acceptable: bool = False
    iterations: int = 0
    residuals: Optional[KktResiduals] = None


class DualSlaveSolution(BaseModel):
    """Point of the dual slave with its worst-case realization"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    z_ms: np.ndarray = Field(default_factory=_empty)
    lam_e: np.ndarray = Field(default_factory=_empty, description="lambda_s_xi")
    z_ie: np.ndarray = Field(default_factory=_empty, description="z_s_xi")
    lam_cs: np.ndarray = Field(default_factory=_empty)
    z_c: np.ndarray = Field(default_factory=_empty)
    y_cone: np.ndarray = Field(default_factory=_empty)
    psi: np.ndarray = Field(default_factory=_empty)
    psi_plus: np.ndarray = Field(default_factory=_empty)
    psi_minus: np.ndarray = Field(default_factory=_empty)
    u: np.ndarray = Field(default_factory=_empty)
    xi: np.ndarray = Field(default_factory=_empty)
    sd_constant: float = Field(0.0, description="F_c + (T y_m - r)'z_ms - t_e'lambda - t_ie'z [$/h]")
    sd: float = Field(0.0, description="Dual slave objective [$/h]")
    y_s: np.ndarray = Field(default_factory=_empty, description="Primal slave dispatch at xi")
    slave_cost: Optional[float] = Field(None, description="Primal slave objective at xi [$/h]")
    saturated: List[int] = Field(default_factory=list, description="Entries with |Psi_k| > L")
    snapped: bool = False
    method: Literal["nlp", "vertex", "primal"] = Field("primal", description="Where the dual point came from")
    status: str = Field("", description="PDIPM status of the dual slave solve")
    solves: int = Field(0, description="Primal and dual slave solves spent on this realization")


class DualResiduals(BaseModel):
    """Infinity norms of the dual-slave feasibility conditions"""

    stationarity: float = Field(..., description="G'z_ms + B_e'lambda + B_ie'z + U'lambda_cs + F_s")
    cone_link: float = Field(..., description="lambda_cs + 2 z_c H y_cone per corridor")
    psi_split: float = Field(..., description="Psi+ - Psi- - Psi")
    psi_bounds: float = Field(0.0, description="Largest excess of Psi+ or Psi- over L")
    u_bounds: float = Field(..., description="Largest excess of u over its bounds")
    sign: float = Field(..., description="Largest negative entry of z_ms, z_ie, z_c, Psi+, Psi-")

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.cone_link, self.psi_split, self.psi_bounds, self.u_bounds, self.sign)


class BendersCut(BaseModel):
    """chi >= constant + coef'y_m"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    constant: float
    coef: np.ndarray
    y_m: np.ndarray = Field(..., description="Plan the cut was generated at")
    sd: float = Field(..., description="Dual slave objective at the generating plan")

    def value(self, y_m: np.ndarray) -> float:
        return float(self.constant + self.coef @ np.asarray(y_m, dtype=float))


class IterationSnapshot(BaseModel):
    """One Benders iteration"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    p: int
    y_m: np.ndarray
    xi: np.ndarray
    y_cone: np.ndarray
    y_s: np.ndarray = Field(default_factory=_empty)
    sd: float
    investment: float
    lb: float
    ub: float
    gap: float
    wall_time: float = Field(0.0, description="Seconds since the start of the run")


class BendersState(BaseModel):
    """Bounds, cuts and trace of the outer loop; bounds in $/h"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    iteration: int = 0
    lb: float = float("-inf")
    ub: float = float("inf")
    cuts: List[BendersCut] = Field(default_factory=list)
    snapshots: List[IterationSnapshot] = Field(default_factory=list)
    converged: bool = False
    best_y_m: np.ndarray = Field(default_factory=_empty)
    best_sd: float = float("inf")

    @property
    def gap(self) -> float:
        if not np.isfinite(self.ub) or not np.isfinite(self.lb):
            return float("inf")
        return float((self.ub - self.lb) / max(abs(self.ub), 1e-12))


class BendersResult(BaseModel):
    """Plan, trace and worst case of one robust solve"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    plan: TepPlan
    state: BendersState
    worst_case: DualSlaveSolution
    u_d: float = 0.0
    u_r: float = 0.0
    wall_time: float = 0.0
    annualization: float = Field(8760.0, gt=0)

    @property
    def total_cost(self) -> float:
        """Investment plus worst-case operation [$/yr]"""
        return self.plan.investment_cost + self.annualization * self.worst_case.sd


class DualSlaveOptions(BaseModel):
    """Worst-case search options of solve_dual_slave"""

    ipm: IpmOptions = Field(default_factory=IpmOptions)
    method: Literal["nlp", "vertex"] = Field(
        "nlp", description="Solve the dual slave NLP, or search box vertices with primal slave solves"
    )
    complementarity: float = Field(1e-6, gt=0, description="Relaxation of Psi+_k Psi-_k <= eps in the dual slave NLP")
    polish: bool = Field(True, description="Run vertex ascent when the dual slave point is not tight at its xi")
    fallback: bool = Field(True, description="Fall back to the vertex search when the dual slave NLP fails")
    vertex_ascent: bool = Field(True, description="Move to the snapped vertex and re-solve while SD increases")
    max_ascent_steps: int = Field(20, ge=0)
    enumerate_limit: int = Field(16, ge=0, description="Vertex search enumerates the box when it has at most this many vertices")
    ascent_tolerance: float = Field(1e-9, ge=0, description="Relative SD increase needed to keep climbing")
    tight_tolerance: float = Field(1e-5, gt=0, description="Relative slack between SD and the slave cost at xi")
    perturbation: float = Field(0.05, gt=0, lt=1, description="Relative perturbation of the retry start")
    retry_seed: int = 0


class BendersOptions(BaseModel):
    """Outer loop options"""

    tolerance: Optional[float] = Field(default_factory=lambda: settings.bd_tolerance, gt=0)
    max_iters: int = Field(default_factory=lambda: settings.bd_max_iters, ge=1)
    init_topology: Literal["all", "deterministic"] = "all"
    accumulate_snapshots: bool = Field(False, description="Keep the operating block of every past snapshot in the master")
    variable_reduction: bool = Field(False, description="Write the linearized cones directly in y_s")
    taylor_rows: bool = Field(True, description="Include the linearized cone rows in the master")
    slave: DualSlaveOptions = Field(default_factory=DualSlaveOptions)
    bb: BranchAndBoundOptions = Field(default_factory=BranchAndBoundOptions)


class GapRecord(BaseModel):
    system: str
    topology: str
    primal: float = Field(..., description="[$/yr]")
    dual: float = Field(..., description="[$/yr]")
    relative_gap: float
    dual_residual: float = Field(..., description="Worst dual feasibility residual")
    dual_start: Literal["cold", "warm"] = Field("cold", description="Start of the dual slave NLP")


class CostBreakdown(BaseModel):
    """Annualized cost of a plan at its worst case [$/yr]"""

    investment: float
    generation: float
    curtailment_load: float
    curtailment_res: float
    constant: float = 0.0

    @computed_field
    @property
    def operating(self) -> float:
        return self.generation + self.curtailment_load + self.curtailment_res + self.constant

    @computed_field
    @property
    def total(self) -> float:
        return self.investment + self.operating


class AcopfSolution(BaseModel):
    """Rectangular-coordinate ACOPF with curtailment at a fixed topology"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    e: np.ndarray
    f: np.ndarray
    p_g: np.ndarray
    q_g: np.ndarray
    cp_d: np.ndarray
    cp_r: np.ndarray
    p_from: np.ndarray = Field(default_factory=_empty, description="Total P_ij per corridor [pu]")
    p_to: np.ndarray = Field(default_factory=_empty, description="Total P_ji per corridor [pu]")
    objective: float = Field(..., description="[$/h]")
    converged: bool
    acceptable: bool = Field(False, description="PDIPM kept an iterate that only met the acceptable tolerance")
    violation: float = Field(..., description="Largest row violation [pu]")
    starts: int = 1

    @property
    def v(self) -> np.ndarray:
        return np.hypot(self.e, self.f)


class McsOptions(BaseModel):
    samples: int = Field(default_factory=lambda: settings.mcs_samples, ge=0)
    seed: int = Field(default_factory=lambda: settings.mcs_seed)
    strict: bool = False
    tolerance: float = Field(1e-6, gt=0)
    worst_curtailment: float = Field(0.0, ge=0, description="Worst-case total curtailment of the plan [pu]")
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)
    acopf_seed: int = 0


class McsSample(BaseModel):
    index: int
    xi: List[float]
    converged: bool
    acceptable: bool = False
    objective: float
    cp_d: float = Field(..., description="Total load curtailment [pu]")
    cp_r: float = Field(..., description="Total RES curtailment [pu]")
    violation: float
    feasible: bool


class McsReport(BaseModel):
    samples: int
    seed: int
    mode: Literal["recourse", "strict"] = "recourse"
    converged: int = 0
    feasible: int = 0
    robustness: Optional[float] = Field(None, description="feasible / samples; None without samples")
    worst_violation: float = 0.0
    failures: List[int] = Field(default_factory=list)
    rows: List[McsSample] = Field(default_factory=list)

    @property
    def robust(self) -> bool:
        return self.robustness is not None and self.robustness >= 1.0


class DominanceReport(BaseModel):
    worst_cost: float
    sample_costs: List[float]
    tolerance: float
    dominated: bool

    @property
    def max_sample_cost(self) -> float:
        return max(self.sample_costs, default=float("-inf"))


class BruteForceResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    plan: TepPlan
    cost: float = Field(..., description="Investment + worst-case operation [$/h]")
    worst_xi: np.ndarray
    plans_evaluated: int
    vertices: int


class SweepRow(BaseModel):
    u_d: float
    u_r: float
    plan: str
    investment: float
    operating: float
    total: float
    increase: float = Field(..., description="Increase over the deterministic total [%]")
    cp_d: float
    cp_r: float
    iterations: int
    converged: bool


class OptimalityGapRecord(BaseModel):
    """Local non-convex optimum against the relaxation at a fixed plan"""

    system: str
    topology: str
    nonconvex: float = Field(..., description="[$/yr]")
    relaxed: float = Field(..., description="[$/yr]")
    relative_gap: float
    starts: int


class WorstCaseReport(BaseModel):
    """Snapped worst-case realization of a robust plan and where it curtails"""

    case: str
    u_d: float = Field(..., description="[%]")
    u_r: float = Field(..., description="[%]")
    xi_d: Dict[str, float] = Field(..., description="Load deviation per bus [pu]")
    xi_r: Dict[str, float] = Field(..., description="RES deviation per bus [pu]")
    psi: List[float] = Field(..., description="Objective coefficient of xi [$/h per pu]")
    sd: float = Field(..., description="Worst-case operating cost [$/yr]")
    cp_d: Dict[str, float] = Field(..., description="Load curtailment per bus [pu]")
    cp_r: Dict[str, float] = Field(..., description="RES curtailment per bus [pu]")

    @property
    def curtailment(self) -> float:
        return sum(self.cp_d.values()) + sum(self.cp_r.values())
