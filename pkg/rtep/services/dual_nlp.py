"""Dual slave as a smooth NLP over the uncertainty box

Variables, in order: the multipliers of the T/G rows (z_ms), of the balance
rows (lambda), of the B_ie rows (z_ie), lambda_cs, z_c, y_cone, Psi+, Psi-
and u. The NLP maximizes

    SD = F_c + (T y_m - r)'z_ms - t_e'lambda - t_ie'z + 1'u

subject to

    G'z_ms + B_e'lambda + B_ie'z + U'lambda_cs + F_s = 0
    lambda_cs + 2 z_c H y_cone = 0                      per corridor
    Psi+ - Psi- = J_e'lambda + J_ie'z
    Psi+ xi_min - Psi- xi_max <= u <= Psi+ xi_max - Psi- xi_min
    Psi+_k Psi-_k <= eps,  0 <= Psi+, Psi- <= L
    y_cone' H y_cone <= 0,  D4 >= 0,  |D| <= cone bound
    z_ms, z_ie, z_c >= 0

y_cone in the cone keeps lambda_cs in the cone. With Psi+ Psi- = 0 the u
rows give u_k = max(Psi_k xi_min_k, Psi_k xi_max_k), so SD is the dual
objective at its own worst-case realization.

A row pair closed to a single value at the plan (the flow rows of a line
that is not built, a generator with p_min = p_max) gets one free multiplier
in place of two non-negative ones.
"""

import logging
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from rtep.core.exceptions import AssemblyError, SlaveSolveError
from rtep.models.compact import CompactRobustModel, RowInfo, VariableIndex
from rtep.models.network import UncertaintyBox
from rtep.models.results import DualSlaveSolution
from rtep.models.solver import IpmOptions, NlpSolution
from rtep.services.ipm import pdipm_solve
from rtep.services.quadratic import EQUALITY_WIDTH, QuadraticRows, build_nlp

logger = logging.getLogger(__name__)

# |D_k| of the dual cone variables is capped at this multiple of max(v_max)^2
CONE_BOUND_FACTOR = 4.0

MULTIPLIER_GROUPS = (("z_ms", "TG"), ("lam_e", "Be"), ("z_ie", "Bie"))


class MultiplierMap(NamedTuple):
    """Rows of one compact block against their NLP columns"""
    P: sp.csr_matrix
    free: np.ndarray
    labels: List[str]


def multiplier_map(rhs: np.ndarray, J: sp.spmatrix, infos: List[RowInfo], block: str = "") -> MultiplierMap:
    """Columns of the multipliers of one block

    An equality row gets a free column, a pair closed at this plan one free
    column (+1 on the upper row, -1 on the lower one) and every other row a
    non-negative column of its own.

    Raises:
        SlaveSolveError: If the two sides of a pair cross whatever xi is
    """
    J = sp.csr_matrix(J)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    free: List[bool] = []
    labels: List[str] = []

    def closed(up: int, lo: int) -> bool:
        if (J.getrow(up) + J.getrow(lo)).count_nonzero():
            return False
        width = rhs[up] + rhs[lo]
        if width < -EQUALITY_WIDTH:
            raise SlaveSolveError(
                f"row '{infos[up].label}' has an empty interval (width {width:.6g})",
                {"block": block, "row": infos[up].label},
            )
        return width <= EQUALITY_WIDTH

    for k, info in enumerate(infos):
        if info.side == "lower" and info.pair is not None and closed(info.pair, k):
            continue
        col = len(free)
        if info.side == "equality":
            entries, is_free = [(k, 1.0)], True
        elif info.side == "upper" and info.pair is not None and closed(k, info.pair):
            entries, is_free = [(k, 1.0), (info.pair, -1.0)], True
        else:
            entries, is_free = [(k, 1.0)], False
        for row, value in entries:
            rows.append(row)
            cols.append(col)
            vals.append(value)
        free.append(is_free)
        labels.append(info.dual)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(len(infos), len(free)))
    return MultiplierMap(P, np.asarray(free, dtype=bool), labels)


def _place(space: VariableIndex, n_rows: int, parts: Dict[str, sp.spmatrix]) -> sp.csr_matrix:
    blocks = []
    for group, (start, stop) in space.groups.items():
        if stop == start:
            continue
        part = parts.get(group)
        blocks.append(sp.csr_matrix((n_rows, stop - start)) if part is None else sp.csr_matrix(part))
    return sp.hstack(blocks, format="csr")


class DualSlaveNlp:
    """Dual slave of a compact model at a fixed plan and a given box"""

    def __init__(
        self,
        model: CompactRobustModel,
        y_m: np.ndarray,
        box: Optional[UncertaintyBox] = None,
        complementarity: float = 1e-6,
    ):
        self.model = model
        self.y_m = np.asarray(y_m, dtype=float)
        self.box = box or model.box
        if self.y_m.shape != (model.n_m,):
            raise AssemblyError(f"plan has {self.y_m.size} entries, expected {model.n_m}")
        if self.box.size != model.n_xi:
            raise AssemblyError(f"box has {self.box.size} entries, expected {model.n_xi}")

        tg_rhs = model.r - model.T @ self.y_m
        self.maps: Dict[str, MultiplierMap] = {
            "TG": multiplier_map(tg_rhs, sp.csr_matrix((model.r.size, model.n_xi)), model.row_info["TG"], "TG"),
            "Be": multiplier_map(model.t_e, model.J_e, model.row_info["Be"], "Be"),
            "Bie": multiplier_map(model.t_ie, model.J_ie, model.row_info["Bie"], "Bie"),
        }
        xi_labels = [str(k) for k in range(model.n_xi)]
        cone_names = model.space.y_cone.names
        self.space = VariableIndex.from_groups([
            ("z_ms", self.maps["TG"].labels),
            ("lam_e", self.maps["Be"].labels),
            ("z_ie", self.maps["Bie"].labels),
            ("lam_cs", cone_names),
            ("z_c", model.cone_labels),
            ("y_cone", cone_names),
            ("psi_plus", xi_labels),
            ("psi_minus", xi_labels),
            ("u", xi_labels),
        ])
        self.cone_bound = CONE_BOUND_FACTOR * max(bus.v_max for bus in model.case.buses) ** 2
        xmin, xmax = self._bounds()
        self.problem, self.split = build_nlp(
            self._rows(complementarity),
            self._cost(tg_rhs),
            self.cold_start(),
            cost_constant=-model.F_c,
            name=f"{model.case.name}-dual-slave",
            xmin=xmin,
            xmax=xmax,
        )
        logger.debug(
            f"[{self.problem.name}] {self.space.size} variables, {self.problem.n_eq} equalities, "
            f"{self.problem.n_ineq} inequalities"
        )

    def _rows(self, complementarity: float):
        model, v, maps = self.model, self.space, self.maps
        rows = QuadraticRows(v.size)
        n_xi = model.n_xi

        stationarity = _place(v, model.n_s, {
            "z_ms": model.G.T @ maps["TG"].P,
            "lam_e": model.B_e.T @ maps["Be"].P,
            "z_ie": model.B_ie.T @ maps["Bie"].P,
            "lam_cs": model.U.T,
        })
        rows.add_linear_block(
            stationarity, -model.F_s, -model.F_s,
            [f"stationarity[{name}]" for name in model.space.y_s.names],
        )

        weights = np.diag(model.H)
        for c, label in enumerate(model.cone_labels):
            z_c = v.at("z_c", c)
            for k in range(4):
                rows.add(
                    linear={v.at("lam_cs", 4 * c + k): 1.0},
                    quadratic=[(z_c, v.at("y_cone", 4 * c + k), 2.0 * weights[k])],
                    lo=0.0, hi=0.0, label=f"cone link[D{k + 1}[{label}]]",
                )

        eye = sp.identity(n_xi, format="csr")
        psi_split = _place(v, n_xi, {
            "psi_plus": eye,
            "psi_minus": -eye,
            "lam_e": -(model.J_e.T @ maps["Be"].P),
            "z_ie": -(model.J_ie.T @ maps["Bie"].P),
        })
        rows.add_linear_block(psi_split, 0.0, 0.0, [f"psi split[{k}]" for k in range(n_xi)])

        lower, upper = self.box.lower, self.box.upper
        for k in range(n_xi):
            u, plus, minus = v.at("u", k), v.at("psi_plus", k), v.at("psi_minus", k)
            if upper[k] - lower[k] <= EQUALITY_WIDTH:
                rows.add({u: 1.0, plus: -upper[k], minus: upper[k]}, lo=0.0, hi=0.0, label=f"u[{k}]")
                continue
            rows.add({u: 1.0, plus: -upper[k], minus: lower[k]}, hi=0.0, label=f"u upper[{k}]")
            rows.add({u: 1.0, plus: -lower[k], minus: upper[k]}, lo=0.0, label=f"u lower[{k}]")
            rows.add(quadratic=[(plus, minus, 1.0)], hi=complementarity, label=f"psi complementarity[{k}]")

        for c, label in enumerate(model.cone_labels):
            vectors = [[(v.at("y_cone", 4 * c + k), 1.0)] for k in range(4)]
            rows.add_square_form(vectors, weights, hi=0.0, label=f"dual cone[{label}]")
        return rows.build()

    def _cost(self, tg_rhs: np.ndarray) -> np.ndarray:
        """Cost of min -SD"""
        model, v = self.model, self.space
        cost = np.zeros(v.size)
        cost[v.span("z_ms")] = self.maps["TG"].P.T @ tg_rhs
        cost[v.span("lam_e")] = self.maps["Be"].P.T @ model.t_e
        cost[v.span("z_ie")] = self.maps["Bie"].P.T @ model.t_ie
        cost[v.span("u")] = -1.0
        return cost

    def _bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        v = self.space
        xmin = np.full(v.size, -np.inf)
        xmax = np.full(v.size, np.inf)
        for group, block in MULTIPLIER_GROUPS:
            span = xmin[v.span(group)]
            span[~self.maps[block].free] = 0.0
        xmin[v.span("z_c")] = 0.0
        cones = v.span("y_cone")
        xmin[cones] = -self.cone_bound
        xmax[cones] = self.cone_bound
        xmin[cones.start + 3:cones.stop:4] = 0.0
        for group in ("psi_plus", "psi_minus"):
            xmin[v.span(group)] = 0.0
            xmax[v.span(group)] = self.model.case.big_l
        return xmin, xmax

    def cold_start(self) -> np.ndarray:
        """Unit multipliers on inequality rows, D = (0, 0, 0, 1), Psi+ = Psi- = 1"""
        v = self.space
        x = np.zeros(v.size)
        for group, block in MULTIPLIER_GROUPS:
            x[v.span(group)] = np.where(self.maps[block].free, 0.0, 1.0)
        x[v.span("z_c")] = 1.0
        cones = v.span("y_cone")
        x[cones.start + 3:cones.stop:4] = 1.0
        x[v.span("psi_plus")] = 1.0
        x[v.span("psi_minus")] = 1.0
        return x

    def start_from(self, sol: DualSlaveSolution) -> np.ndarray:
        """NLP point of a dual slave solution, e.g. one recovered from a primal solve"""
        v = self.space
        x = np.zeros(v.size)
        values = {"TG": sol.z_ms, "Be": sol.lam_e, "Bie": sol.z_ie}
        for group, block in MULTIPLIER_GROUPS:
            x[v.span(group)] = self.maps[block].P.T @ values[block]
        x[v.span("lam_cs")] = sol.lam_cs
        x[v.span("z_c")] = sol.z_c
        x[v.span("y_cone")] = np.clip(sol.y_cone, -self.cone_bound, self.cone_bound)
        limit = self.model.case.big_l
        plus = np.clip(sol.psi, 0.0, limit)
        minus = np.clip(-sol.psi, 0.0, limit)
        x[v.span("psi_plus")] = plus
        x[v.span("psi_minus")] = minus
        x[v.span("u")] = plus * self.box.upper - minus * self.box.lower
        return x

    def unpack(self, x: np.ndarray, status: str = "") -> DualSlaveSolution:
        """DualSlaveSolution of an NLP point, multipliers split back onto the compact rows"""
        model, v = self.model, self.space
        signed = {block: self.maps[block].P @ x[v.span(group)] for group, block in MULTIPLIER_GROUPS}
        z_ms = np.maximum(signed["TG"], 0.0)
        lam_e = signed["Be"]
        z_ie = np.maximum(signed["Bie"], 0.0)
        psi = model.J_e.T @ lam_e + model.J_ie.T @ z_ie
        sd_constant = float(
            model.F_c
            + (model.T @ self.y_m - model.r) @ z_ms
            - model.t_e @ lam_e
            - model.t_ie @ z_ie
        )
        u = x[v.span("u")].copy()
        return DualSlaveSolution(
            z_ms=z_ms,
            lam_e=lam_e,
            z_ie=z_ie,
            lam_cs=x[v.span("lam_cs")].copy(),
            z_c=x[v.span("z_c")].copy(),
            y_cone=x[v.span("y_cone")].copy(),
            psi=psi,
            psi_plus=x[v.span("psi_plus")].copy(),
            psi_minus=x[v.span("psi_minus")].copy(),
            u=u,
            xi=np.where(psi >= 0, self.box.upper, self.box.lower),
            sd_constant=sd_constant,
            sd=sd_constant + float(u.sum()),
            method="nlp",
            status=status,
            solves=1,
        )


def solve_dual_nlp(
    model: CompactRobustModel,
    y_m: np.ndarray,
    box: Optional[UncertaintyBox] = None,
    options: Optional[IpmOptions] = None,
    start: Optional[DualSlaveSolution] = None,
    complementarity: float = 1e-6,
) -> Tuple[DualSlaveSolution, NlpSolution]:
    """Solve the dual slave NLP with PDIPM

    Args:
        model: Compact robust model
        y_m: Binary plan
        box: Uncertainty box (the model's when omitted)
        options: PDIPM options
        start: Dual point to start from (the cold start when omitted)
        complementarity: Bound on Psi+_k Psi-_k

    Returns:
        Tuple[DualSlaveSolution, NlpSolution]: Unpacked dual point and the raw PDIPM result
    """
    nlp = DualSlaveNlp(model, y_m, box, complementarity)
    x0 = nlp.cold_start() if start is None else nlp.start_from(start)
    sol = pdipm_solve(nlp.problem, options, x0=x0)
    dual = nlp.unpack(sol.x, sol.status.value)
    logger.debug(
        f"[{nlp.problem.name}] {sol.status.value} after {sol.iterations} iterations "
        f"from the {'cold' if start is None else 'given'} start: SD {dual.sd:.8g}"
    )
    return dual, sol
