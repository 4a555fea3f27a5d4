"""Variable spaces, named constraints and the compact block model"""

from functools import cached_property
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from rtep.models.network import NetworkCase, UncertaintyBox


class VariableIndex(BaseModel):
    """Ordered, named variable groups laid out contiguously"""
    model_config = ConfigDict(frozen=True)

    names: List[str] = Field(default_factory=list)
    groups: Dict[str, Tuple[int, int]] = Field(default_factory=dict, description="group -> [start, stop)")

    @classmethod
    def from_groups(cls, groups: List[Tuple[str, List[str]]]) -> "VariableIndex":
        names: List[str] = []
        spans: Dict[str, Tuple[int, int]] = {}
        for group, labels in groups:
            spans[group] = (len(names), len(names) + len(labels))
            names.extend(f"{group}[{label}]" for label in labels)
        return cls(names=names, groups=spans)

    @property
    def size(self) -> int:
        return len(self.names)

    def span(self, group: str) -> slice:
        start, stop = self.groups[group]
        return slice(start, stop)

    def at(self, group: str, k: int) -> int:
        start, stop = self.groups[group]
        if not 0 <= k < stop - start:
            raise IndexError(f"{group}[{k}] out of range")
        return start + k

    def has(self, group: str) -> bool:
        return group in self.groups

    @cached_property
    def position(self) -> Dict[str, int]:
        return {name: k for k, name in enumerate(self.names)}

    def index(self, name: str) -> int:
        return self.position[name]


class RelaxedVariableSpace(BaseModel):
    """Index maps for the slave variables y_s, the cone variables y_cone and the binaries y_m"""
    model_config = ConfigDict(frozen=True)

    y_s: VariableIndex
    y_cone: VariableIndex
    y_m: VariableIndex
    candidate_lines: List[Tuple[int, int]] = Field(default_factory=list, description="(corridor, k) per binary")


RowSense = Literal["<", "="]
RowSide = Literal["upper", "lower", "single", "equality"]
BlockName = Literal["A", "TG", "Be", "Bie"]


class LinearRow(BaseModel):
    """One named linear row: y_m, y_s and xi terms (sense) rhs"""
    model_config = ConfigDict(frozen=True)

    label: str
    family: str = Field(..., description="Constraint family, e.g. 'base-line flow limit'")
    dual: str = Field(..., description="Dual-variable label of this row")
    block: BlockName
    y: Dict[int, float] = Field(default_factory=dict)
    m: Dict[int, float] = Field(default_factory=dict)
    xi: Dict[int, float] = Field(default_factory=dict)
    rhs: float = 0.0
    sense: RowSense = "<"
    side: RowSide = "single"
    pair: Optional[str] = Field(None, description="Label of the opposite-side row of the same constraint")

    def residual(self, y_s: np.ndarray, y_m: np.ndarray, xi: np.ndarray) -> float:
        """lhs - rhs evaluated term by term"""
        total = 0.0
        for k, v in self.y.items():
            total += v * y_s[k]
        for k, v in self.m.items():
            total += v * y_m[k]
        for k, v in self.xi.items():
            total += v * xi[k]
        return total - self.rhs


class ConeLink(BaseModel):
    """D_1..D_4 of one corridor as linear forms over y_s"""
    model_config = ConfigDict(frozen=True)

    corridor: int
    label: str
    d: List[Dict[int, float]] = Field(..., min_length=4, max_length=4)


class QuadraticEquality(BaseModel):
    """sum(linear) + sum(q * x_i * x_j) = 0, used for the voltage-product definitions"""
    model_config = ConfigDict(frozen=True)

    label: str
    family: str
    linear: Dict[int, float] = Field(default_factory=dict)
    quadratic: List[Tuple[int, int, float]] = Field(default_factory=list)


class TepModel(BaseModel):
    """Named-constraint description of one TEP formulation"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["nonconvex", "relaxed", "robust"]
    case: NetworkCase
    box: Optional[UncertaintyBox] = None
    space: RelaxedVariableSpace
    rows: List[LinearRow]
    cones: List[ConeLink] = Field(default_factory=list)
    definitions: List[QuadraticEquality] = Field(default_factory=list)
    cost_s: Dict[int, float] = Field(default_factory=dict, description="Hourly cost per y_s entry")
    cost_m: Dict[int, float] = Field(default_factory=dict, description="Hourly cost per binary")
    cost_constant: float = 0.0

    def rows_in(self, block: str) -> List[LinearRow]:
        return [row for row in self.rows if row.block == block]


class RowInfo(BaseModel):
    """Name, source and dual label of one compact row"""
    model_config = ConfigDict(frozen=True)

    label: str
    family: str
    dual: str
    side: RowSide
    pair: Optional[int] = Field(None, description="Row index of the opposite side within the same block")


class CompactRobustModel(BaseModel):
    """Block form of the robust problem

        min F_m'y_m + max_xi (F_s'y_s + F_c)
        A y_m <= h;  T y_m + G y_s <= r
        B_e y_s + J_e xi = t_e;  B_ie y_s + J_ie xi <= t_ie
        y_cone + U y_s = 0;  y_cone_ij' H y_cone_ij <= 0
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    case: NetworkCase
    box: UncertaintyBox
    space: RelaxedVariableSpace

    F_m: np.ndarray
    F_s: np.ndarray
    F_c: float
    A: sp.csr_matrix
    h: np.ndarray
    T: sp.csr_matrix
    G: sp.csr_matrix
    r: np.ndarray
    B_e: sp.csr_matrix
    t_e: np.ndarray
    J_e: sp.csr_matrix
    B_ie: sp.csr_matrix
    t_ie: np.ndarray
    J_ie: sp.csr_matrix
    U: sp.csr_matrix
    H: np.ndarray

    row_info: Dict[str, List[RowInfo]] = Field(..., description="Block name -> per-row info")
    cone_labels: List[str]

    @property
    def n_s(self) -> int:
        return self.space.y_s.size

    @property
    def n_m(self) -> int:
        return self.space.y_m.size

    @property
    def n_cones(self) -> int:
        return len(self.cone_labels)

    @property
    def n_xi(self) -> int:
        return self.J_e.shape[1]

    def cone_values(self, y_s: np.ndarray) -> np.ndarray:
        """y_cone = -U y_s, shaped (n_cones, 4)"""
        return (-(self.U @ y_s)).reshape(self.n_cones, 4)

    def dual_label_map(self) -> Dict[str, Tuple[str, int]]:
        """Dual label -> (block, row)"""
        mapping = {}
        for block, infos in self.row_info.items():
            for k, info in enumerate(infos):
                mapping[info.dual] = (block, k)
        return mapping

    def structure(self) -> Dict[str, dict]:
        """Shape and non-zero count of every block"""
        blocks = {
            "A": self.A, "T": self.T, "G": self.G, "B_e": self.B_e, "J_e": self.J_e,
            "B_ie": self.B_ie, "J_ie": self.J_ie, "U": self.U,
        }
        return {
            name: {"shape": list(mat.shape), "nnz": int(mat.nnz)}
            for name, mat in blocks.items()
        }


class CompactModelDump(BaseModel):
    """Serializable description of a CompactRobustModel"""

    case: str
    u_d: float
    u_r: float
    blocks: Dict[str, dict]
    H: List[List[float]]
    variables: Dict[str, List[str]]
    rows: Dict[str, List[RowInfo]]
    cones: List[str]
