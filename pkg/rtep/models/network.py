"""Network case data model"""

from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Per-unit quantities must be finite; pydantic rejects NaN/inf with allow_inf_nan=False
_CASE_CONFIG = ConfigDict(
    frozen=True,
    extra="forbid",
    allow_inf_nan=False,
    populate_by_name=True,
)


class Bus(BaseModel):
    """A bus with its rated load, RES output and voltage limits"""
    model_config = _CASE_CONFIG

    id: int = Field(..., description="Bus number")
    p_load: float = Field(0.0, ge=0, description="Rated real power load P_d [pu]")
    q_over_p: Optional[float] = Field(
        None, description="Tangent of the load power-factor angle (delta); absent for buses without load"
    )
    p_res: float = Field(0.0, ge=0, description="Rated RES generation P_r [pu]")
    b_shunt: float = Field(0.0, description="Shunt susceptance b_sh [pu]")
    v_min: float = Field(0.95, gt=0, description="Lower voltage magnitude limit [pu]")
    v_max: float = Field(1.05, gt=0, description="Upper voltage magnitude limit [pu]")

    @model_validator(mode="after")
    def validate_bus(self):
        if self.v_min > self.v_max:
            raise ValueError(f"bus {self.id}: v_min {self.v_min} exceeds v_max {self.v_max}")
        if self.p_load > 0 and self.q_over_p is None:
            raise ValueError(f"bus {self.id}: q_over_p is required when p_load > 0")
        if self.p_load == 0 and self.q_over_p is not None:
            raise ValueError(f"bus {self.id}: q_over_p is undefined for a bus without load")
        return self

    @property
    def delta(self) -> float:
        """delta_i, zero where undefined"""
        return self.q_over_p if self.q_over_p is not None else 0.0

    @property
    def q_load(self) -> float:
        return self.delta * self.p_load


class Generator(BaseModel):
    """Conventional generator with linear cost a*P + b"""
    model_config = _CASE_CONFIG

    bus: int
    p_min: float = Field(0.0, description="[pu]")
    p_max: float = Field(..., description="[pu]")
    q_min: float = Field(..., description="[pu]")
    q_max: float = Field(..., description="[pu]")
    cost_a: float = Field(0.0, ge=0, description="Linear cost coefficient a_i [per pu-hour, before annualization]")
    cost_b: float = Field(0.0, ge=0, description="Constant cost b_i [per hour, before annualization]")

    @model_validator(mode="after")
    def validate_limits(self):
        if self.p_min > self.p_max:
            raise ValueError(f"generator at bus {self.bus}: p_min exceeds p_max")
        if self.q_min > self.q_max:
            raise ValueError(f"generator at bus {self.bus}: q_min exceeds q_max")
        return self


class ExistingCorridor(BaseModel):
    """Base-topology corridor holding n0 identical lines"""
    model_config = _CASE_CONFIG

    from_bus: int = Field(..., alias="from")
    to_bus: int = Field(..., alias="to")
    n0: int = Field(1, ge=1, description="Number of existing identical lines")
    g: float = Field(..., description="Series conductance [pu]")
    b: float = Field(..., description="Series susceptance [pu], negative for inductive lines")
    b_sh_half: float = Field(0.0, description="Half line-charging susceptance [pu]")
    p_max: float = Field(..., gt=0, description="Real power rating per line [pu]")


class CandidateCorridor(BaseModel):
    """Corridor where up to n_max identical lines may be installed"""
    model_config = _CASE_CONFIG

    from_bus: int = Field(..., alias="from")
    to_bus: int = Field(..., alias="to")
    n_max: int = Field(..., ge=1, description="Installations allowed beyond the base topology")
    g: float
    b: float
    b_sh_half: float = 0.0
    p_max: float = Field(..., gt=0, description="Real power rating per line [pu]")
    install_cost: float = Field(..., gt=0, description="Scaled cost per installed line IC_ij (before annualization)")


class Corridor(BaseModel):
    """A corridor of the union Omega and Omega^0, oriented from the lower bus index"""
    model_config = ConfigDict(frozen=True)

    index: int
    i: int = Field(..., description="Position of the sending bus")
    j: int = Field(..., description="Position of the receiving bus")
    from_bus: int
    to_bus: int
    n0: int = 0
    g0: float = 0.0
    b0: float = 0.0
    b_sh0: float = 0.0
    p_max0: float = 0.0
    n_max: int = 0
    gc: float = 0.0
    bc: float = 0.0
    b_shc: float = 0.0
    p_maxc: float = 0.0
    install_cost: float = 0.0

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


class NetworkCase(BaseModel):
    """Immutable network case with the planning and solver constants"""
    model_config = _CASE_CONFIG

    name: str = "case"
    base_mva: float = Field(100.0, gt=0)
    angle_ref_bus: Optional[int] = Field(
        None, description="Angle reference bus; defaults to the lowest-numbered generator bus"
    )
    gamma_d: float = Field(100.0, gt=0, description="Load curtailment cost")
    gamma_r: float = Field(500.0, gt=0, description="RES curtailment cost")
    big_m: float = Field(10.0, gt=0, description="Big-M number")
    big_l: float = Field(300.0, gt=0, description="Bound on the Psi split variables")
    bd_tolerance: float = Field(1e-5, gt=0, description="Benders relative gap tolerance")
    eps_theta: float = Field(0.0044, gt=0, description="Angle-consistency tolerance [rad]")
    annualization: float = Field(8760.0, gt=0, description="Scaling of hourly costs to $/yr")

    buses: List[Bus] = Field(..., min_length=1)
    generators: List[Generator] = Field(default_factory=list)
    existing_lines: List[ExistingCorridor] = Field(default_factory=list)
    candidate_corridors: List[CandidateCorridor] = Field(default_factory=list)

    @field_validator("buses")
    @classmethod
    def validate_unique_buses(cls, v):
        ids = [bus.id for bus in v]
        if len(ids) != len(set(ids)):
            raise ValueError("bus ids must be unique")
        return v

    @model_validator(mode="after")
    def validate_case(self):
        ids = {bus.id for bus in self.buses}
        if self.angle_ref_bus is not None and self.angle_ref_bus not in ids:
            raise ValueError(f"angle_ref_bus {self.angle_ref_bus} is not a bus")
        if self.angle_ref_bus is None and not self.generators:
            raise ValueError("angle_ref_bus must be given when the case has no generator")
        for gen in self.generators:
            if gen.bus not in ids:
                raise ValueError(f"generator bus {gen.bus} is not a bus")
        seen = set()
        for kind, lines in (("line0", self.existing_lines), ("candidate", self.candidate_corridors)):
            seen.clear()
            for line in lines:
                if line.from_bus not in ids or line.to_bus not in ids:
                    raise ValueError(f"{kind} {line.from_bus}-{line.to_bus} has an unknown endpoint")
                if line.from_bus == line.to_bus:
                    raise ValueError(f"{kind} {line.from_bus}-{line.to_bus} is a self-loop")
                key = frozenset((line.from_bus, line.to_bus))
                if key in seen:
                    raise ValueError(f"{kind} {line.from_bus}-{line.to_bus} is listed twice")
                seen.add(key)
        if self.big_l < 10 * self.big_m:
            raise ValueError(f"big_l ({self.big_l}) must be at least 10*big_m ({10 * self.big_m})")
        if self.candidate_corridors and max(c.install_cost for c in self.candidate_corridors) >= 12:
            raise ValueError("scaled install costs must stay below 12")
        return self

    # Derived, read-only views (the model is frozen, so caching is safe)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @cached_property
    def bus_index(self) -> Dict[int, int]:
        """Bus id -> position"""
        return {bus.id: k for k, bus in enumerate(self.buses)}

    @property
    def reference_bus(self) -> int:
        """Angle reference bus id (lowest-numbered generator bus by default)"""
        if self.angle_ref_bus is not None:
            return self.angle_ref_bus
        return min(gen.bus for gen in self.generators)

    @cached_property
    def corridors(self) -> Tuple[Corridor, ...]:
        """Union of base and candidate corridors in deterministic order"""
        merged: Dict[Tuple[int, int], dict] = {}
        for line in self.existing_lines:
            i, j = sorted((self.bus_index[line.from_bus], self.bus_index[line.to_bus]))
            merged.setdefault((i, j), {}).update(
                n0=line.n0, g0=line.g, b0=line.b, b_sh0=line.b_sh_half, p_max0=line.p_max
            )
        for cand in self.candidate_corridors:
            i, j = sorted((self.bus_index[cand.from_bus], self.bus_index[cand.to_bus]))
            merged.setdefault((i, j), {}).update(
                n_max=cand.n_max, gc=cand.g, bc=cand.b, b_shc=cand.b_sh_half,
                p_maxc=cand.p_max, install_cost=cand.install_cost,
            )
        corridors = []
        for k, (i, j) in enumerate(sorted(merged)):
            corridors.append(Corridor(
                index=k, i=i, j=j,
                from_bus=self.buses[i].id, to_bus=self.buses[j].id,
                **merged[(i, j)],
            ))
        return tuple(corridors)

    @cached_property
    def candidate_lines(self) -> Tuple[Tuple[int, int], ...]:
        """(corridor index, k) for every binary x_ij^k, k = 1..n_max"""
        return tuple(
            (corr.index, k)
            for corr in self.corridors
            for k in range(1, corr.n_max + 1)
        )

    @property
    def p_load(self) -> np.ndarray:
        return np.array([bus.p_load for bus in self.buses])

    @property
    def p_res(self) -> np.ndarray:
        return np.array([bus.p_res for bus in self.buses])

    @property
    def delta(self) -> np.ndarray:
        return np.array([bus.delta for bus in self.buses])

    @property
    def total_load(self) -> complex:
        return complex(sum(b.p_load for b in self.buses), sum(b.q_load for b in self.buses))

    @property
    def total_generation_capacity(self) -> float:
        return float(sum(g.p_max for g in self.generators))

    def annualize(self, hourly: float) -> float:
        """Scale an hourly cost to $/yr"""
        return float(hourly) * self.annualization


class UncertaintyBox(BaseModel):
    """Interval box for xi = (xi_d per bus, xi_r per bus)"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    u_d: float = Field(..., ge=0, description="Load uncertainty [%]")
    u_r: float = Field(..., ge=0, le=100, description="RES uncertainty [%]")
    xi_min: List[float]
    xi_max: List[float]

    @model_validator(mode="after")
    def validate_box(self):
        if len(self.xi_min) != len(self.xi_max) or len(self.xi_min) % 2:
            raise ValueError("xi_min and xi_max must have the same even length (loads then RES)")
        if any(lo > hi for lo, hi in zip(self.xi_min, self.xi_max)):
            raise ValueError("xi_min must not exceed xi_max")
        return self

    @property
    def size(self) -> int:
        return len(self.xi_min)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.xi_min, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.xi_max, dtype=float)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def nonzero(self) -> np.ndarray:
        """Indices of components with a non-degenerate interval"""
        return np.flatnonzero(self.width > 0)

    def contains(self, xi: np.ndarray, tol: float = 1e-12) -> bool:
        xi = np.asarray(xi, dtype=float)
        return bool(np.all(xi >= self.lower - tol) and np.all(xi <= self.upper + tol))

    def heavy_vertex(self) -> np.ndarray:
        """Vertex with every load at its maximum and every RES output at its minimum"""
        n = self.size // 2
        return np.concatenate([self.upper[:n], self.lower[n:]])
