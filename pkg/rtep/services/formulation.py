"""Model builders for the AC TEP family

Three named-constraint descriptions share one row generator:

* the non-convex deterministic model in rectangular voltages,
* its rotated-cone relaxation with angle-consistency rows,
* the relaxation with interval load/RES injections,

and the robust one is assembled into the sparse block form
(A, h, T, G, r, B_e, J_e, t_e, B_ie, J_ie, t_ie, U, H).
"""

import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict

from rtep.core.exceptions import AssemblyError
from rtep.models.compact import (
    CompactModelDump,
    CompactRobustModel,
    ConeLink,
    LinearRow,
    QuadraticEquality,
    RelaxedVariableSpace,
    RowInfo,
    TepModel,
    VariableIndex,
)
from rtep.models.network import Corridor, NetworkCase, UncertaintyBox
from rtep.models.solver import NlpProblem
from rtep.services.netcase import build_uncertainty_box
from rtep.services.quadratic import QuadraticRows, QuadraticSystem, RowSplit, build_nlp

logger = logging.getLogger(__name__)

H_CONE = np.diag([1.0, 1.0, 1.0, -1.0])
ANGLE_LIMIT = np.pi / 2
# Big-pi relaxation of the candidate angle rows
BIG_PI = np.pi

Terms = Dict[int, float]


class _Side(NamedTuple):
    rhs: float
    m: Optional[Terms] = None
    xi: Optional[Terms] = None


def _combine(*parts: Tuple[float, Terms]) -> Terms:
    out: Terms = {}
    for scale, terms in parts:
        for k, v in terms.items():
            out[k] = out.get(k, 0.0) + scale * v
    return {k: v for k, v in out.items() if v != 0.0}


def _negate(terms: Terms) -> Terms:
    return {k: -v for k, v in terms.items()}


class _RowSet:
    """Collects LinearRow objects in build order"""

    def __init__(self):
        self.rows: List[LinearRow] = []

    def interval(self, block: str, family: str, name: str, dual: str, where: str,
                 y: Terms, upper: _Side, lower: _Side):
        """upper: y + m + xi <= rhs;  lower: -y + m + xi <= rhs"""
        up_label, lo_label = f"{name}[{where}].hi", f"{name}[{where}].lo"
        self.rows.append(LinearRow(
            label=up_label, family=family, dual=f"{dual}_hi[{where}]", block=block,
            y=y, m=upper.m or {}, xi=upper.xi or {}, rhs=upper.rhs, side="upper", pair=lo_label,
        ))
        self.rows.append(LinearRow(
            label=lo_label, family=family, dual=f"{dual}_lo[{where}]", block=block,
            y=_negate(y), m=lower.m or {}, xi=lower.xi or {}, rhs=lower.rhs, side="lower", pair=up_label,
        ))

    def equality(self, block: str, family: str, name: str, dual: str, where: str,
                 y: Terms, rhs: float, xi: Optional[Terms] = None):
        self.rows.append(LinearRow(
            label=f"{name}[{where}]", family=family, dual=f"{dual}[{where}]", block=block,
            y=y, xi=xi or {}, rhs=rhs, sense="=", side="equality",
        ))

    def single(self, block: str, family: str, name: str, dual: str, where: str,
               y: Terms, m: Terms, rhs: float):
        self.rows.append(LinearRow(
            label=f"{name}[{where}]", family=family, dual=f"{dual}[{where}]", block=block,
            y=y, m=m, rhs=rhs, side="single",
        ))


def _variable_space(case: NetworkCase, angles: bool, rectangular: bool) -> RelaxedVariableSpace:
    buses = [str(bus.id) for bus in case.buses]
    corridors = [corr.label for corr in case.corridors]
    gens = [f"{k}@{gen.bus}" for k, gen in enumerate(case.generators, 1)]
    lines = [f"{case.corridors[c].label}#{k}" for c, k in case.candidate_lines]

    groups = []
    if rectangular:
        groups += [("e", buses), ("f", buses)]
    groups += [("c_ii", buses), ("c_ij", corridors), ("s_ij", corridors)]
    if angles:
        groups.append(("theta", buses))
    groups += [
        ("P_g", gens), ("Q_g", gens), ("CP_d", buses), ("CP_r", buses),
        ("P_ij", lines), ("Q_ij", lines), ("P_ji", lines), ("Q_ji", lines),
    ]
    cone_names = [f"D{k}[{label}]" for label in corridors for k in range(1, 5)]
    return RelaxedVariableSpace(
        y_s=VariableIndex.from_groups(groups),
        y_cone=VariableIndex(names=cone_names, groups={"D": (0, len(cone_names))}),
        y_m=VariableIndex.from_groups([("x", lines)]),
        candidate_lines=list(case.candidate_lines),
    )


class _Flows:
    """Branch-flow expressions in the voltage-product variables"""

    def __init__(self, space: RelaxedVariableSpace, corr: Corridor):
        ys = space.y_s
        self.cii = ys.at("c_ii", corr.i)
        self.cjj = ys.at("c_ii", corr.j)
        self.cij = ys.at("c_ij", corr.index)
        self.s = ys.at("s_ij", corr.index)

    def p_ij(self, g: float, b: float) -> Terms:
        return {self.cii: g, self.cij: -g, self.s: -b}

    def p_ji(self, g: float, b: float) -> Terms:
        return {self.cjj: g, self.cij: -g, self.s: b}

    def q_ij(self, g: float, b: float, b_sh: float) -> Terms:
        return {self.cij: b, self.cii: -b - b_sh, self.s: -g}

    def q_ji(self, g: float, b: float, b_sh: float) -> Terms:
        return {self.cij: b, self.cjj: -b - b_sh, self.s: g}


def _network_rows(
    case: NetworkCase,
    space: RelaxedVariableSpace,
    *,
    angles: bool,
    uncertain: bool,
) -> List[LinearRow]:
    """Every linear row of the model family, grouped by block"""
    ys = space.y_s
    rows = _RowSet()
    n_b = case.n_buses
    big_m = case.big_m
    eps = case.eps_theta
    corridors = case.corridors
    flows = {corr.index: _Flows(space, corr) for corr in corridors}

    # sequential installation
    for x, (c, k) in enumerate(case.candidate_lines):
        if k > 1:
            where = f"{corridors[c].label}#{k}"
            rows.single("A", "installation order", "seq", "z_seq", where, {}, {x: 1.0, x - 1: -1.0}, 0.0)

    # flow caps, big-M links and angle rows per candidate line
    for x, (c, k) in enumerate(case.candidate_lines):
        corr = corridors[c]
        fl = flows[c]
        where = f"{corr.label}#{k}"
        p_ij, q_ij = ys.at("P_ij", x), ys.at("Q_ij", x)
        p_ji, q_ji = ys.at("P_ji", x), ys.at("Q_ji", x)
        cap = _Side(0.0, {x: -corr.p_maxc})
        qcap = _Side(0.0, {x: -big_m})
        rows.interval("TG", "candidate flow cap", "P_ijk_cap", "z_pijk", where, {p_ij: 1.0}, cap, cap)
        rows.interval("TG", "candidate flow cap", "P_jik_cap", "z_pjik", where, {p_ji: 1.0}, cap, cap)
        rows.interval("TG", "candidate flow cap", "Q_ijk_cap", "z_qijk", where, {q_ij: 1.0}, qcap, qcap)
        rows.interval("TG", "candidate flow cap", "Q_jik_cap", "z_qjik", where, {q_ji: 1.0}, qcap, qcap)

        link = _Side(big_m, {x: big_m})
        g, b, b_sh = corr.gc, corr.bc, corr.b_shc
        rows.interval("TG", "candidate flow link", "P_ijk_link", "zm_pijk", where,
                      _combine((1.0, fl.p_ij(g, b)), (-1.0, {p_ij: 1.0})), link, link)
        rows.interval("TG", "candidate flow link", "P_jik_link", "zm_pjik", where,
                      _combine((1.0, fl.p_ji(g, b)), (-1.0, {p_ji: 1.0})), link, link)
        rows.interval("TG", "candidate flow link", "Q_ijk_link", "zm_qijk", where,
                      _combine((-1.0, fl.q_ij(g, b, b_sh)), (1.0, {q_ij: 1.0})), link, link)
        rows.interval("TG", "candidate flow link", "Q_jik_link", "zm_qjik", where,
                      _combine((-1.0, fl.q_ji(g, b, b_sh)), (1.0, {q_ji: 1.0})), link, link)
        if angles:
            skew = {ys.at("theta", corr.i): 1.0, ys.at("theta", corr.j): -1.0, fl.s: -1.0}
            relaxed = _Side(eps + BIG_PI, {x: BIG_PI})
            rows.interval("TG", "candidate angle consistency", "angle_ijk", "z_ijk", where, skew, relaxed, relaxed)

    # bus balances
    p_terms: List[List[Tuple[float, Terms]]] = [[] for _ in range(n_b)]
    q_terms: List[List[Tuple[float, Terms]]] = [[] for _ in range(n_b)]
    for corr in corridors:
        fl = flows[corr.index]
        if corr.n0:
            p_terms[corr.i].append((corr.n0, fl.p_ij(corr.g0, corr.b0)))
            p_terms[corr.j].append((corr.n0, fl.p_ji(corr.g0, corr.b0)))
            q_terms[corr.i].append((corr.n0, fl.q_ij(corr.g0, corr.b0, corr.b_sh0)))
            q_terms[corr.j].append((corr.n0, fl.q_ji(corr.g0, corr.b0, corr.b_sh0)))
    for x, (c, _) in enumerate(case.candidate_lines):
        corr = corridors[c]
        p_terms[corr.i].append((1.0, {ys.at("P_ij", x): 1.0}))
        p_terms[corr.j].append((1.0, {ys.at("P_ji", x): 1.0}))
        q_terms[corr.i].append((1.0, {ys.at("Q_ij", x): 1.0}))
        q_terms[corr.j].append((1.0, {ys.at("Q_ji", x): 1.0}))
    for g_idx, gen in enumerate(case.generators):
        i = case.bus_index[gen.bus]
        p_terms[i].append((-1.0, {ys.at("P_g", g_idx): 1.0}))
        q_terms[i].append((-1.0, {ys.at("Q_g", g_idx): 1.0}))

    p_eq, q_eq = ("real balance", "reactive balance")
    if uncertain:
        p_eq, q_eq = "uncertain real balance", "uncertain reactive balance"
    for i, bus in enumerate(case.buses):
        cp_d, cp_r = ys.at("CP_d", i), ys.at("CP_r", i)
        xi = {}
        if uncertain and bus.p_load > 0:
            xi[i] = 1.0
        if uncertain and bus.p_res > 0:
            xi[n_b + i] = -1.0
        y = _combine(*p_terms[i], (-1.0, {cp_d: 1.0}), (1.0, {cp_r: 1.0}))
        rows.equality("Be", p_eq, "balance_P", "lambda_p", str(bus.id), y, bus.p_res - bus.p_load, xi)
    for i, bus in enumerate(case.buses):
        cp_d = ys.at("CP_d", i)
        xi = {i: bus.delta} if uncertain and bus.p_load > 0 else {}
        y = _combine(*q_terms[i], (-bus.delta, {cp_d: 1.0}), (-bus.b_shunt, {ys.at("c_ii", i): 1.0}))
        rows.equality("Be", q_eq, "balance_Q", "lambda_q", str(bus.id), y, -bus.delta * bus.p_load, xi)

    # base-line limits
    for corr in corridors:
        if not corr.n0:
            continue
        fl = flows[corr.index]
        limit = _Side(corr.n0 * corr.p_max0)
        rows.interval("Bie", "base-line flow limit", "P_ij0", "z_pij0", corr.label,
                      _combine((corr.n0, fl.p_ij(corr.g0, corr.b0))), limit, limit)
        rows.interval("Bie", "base-line flow limit", "P_ji0", "z_pji0", corr.label,
                      _combine((corr.n0, fl.p_ji(corr.g0, corr.b0))), limit, limit)

    # generator limits
    for g_idx, gen in enumerate(case.generators):
        where = f"{g_idx + 1}@{gen.bus}"
        rows.interval("Bie", "generator limit", "P_g", "z_pg", where, {ys.at("P_g", g_idx): 1.0},
                      _Side(gen.p_max), _Side(-gen.p_min))
        rows.interval("Bie", "generator limit", "Q_g", "z_qg", where, {ys.at("Q_g", g_idx): 1.0},
                      _Side(gen.q_max), _Side(-gen.q_min))

    # voltage magnitude
    for i, bus in enumerate(case.buses):
        rows.interval("Bie", "voltage limit", "V", "z_v", str(bus.id), {ys.at("c_ii", i): 1.0},
                      _Side(bus.v_max ** 2), _Side(-bus.v_min ** 2))

    if angles:
        # angle box, reference bus pinned to zero
        ref = case.bus_index[case.reference_bus]
        for i, bus in enumerate(case.buses):
            limit = _Side(0.0 if i == ref else ANGLE_LIMIT)
            rows.interval("Bie", "angle limit", "theta", "z_theta", str(bus.id), {ys.at("theta", i): 1.0}, limit, limit)
        # base-line angle consistency
        for corr in corridors:
            if not corr.n0:
                continue
            fl = flows[corr.index]
            skew = {ys.at("theta", corr.i): corr.n0, ys.at("theta", corr.j): -corr.n0, fl.s: -corr.n0}
            limit = _Side(corr.n0 * eps)
            rows.interval("Bie", "base-line angle consistency", "angle_ij0", "z_ij0", corr.label, skew, limit, limit)

    # curtailment limits
    for i, bus in enumerate(case.buses):
        xi_d = {i: -1.0} if uncertain and bus.p_load > 0 else None
        xi_r = {n_b + i: -1.0} if uncertain and bus.p_res > 0 else None
        rows.interval("Bie", "curtailment limit", "CP_d", "z_pd", str(bus.id), {ys.at("CP_d", i): 1.0},
                      _Side(bus.p_load, xi=xi_d), _Side(0.0))
        rows.interval("Bie", "curtailment limit", "CP_r", "z_pr", str(bus.id), {ys.at("CP_r", i): 1.0},
                      _Side(bus.p_res, xi=xi_r), _Side(0.0))
    return rows.rows


def _cone_links(case: NetworkCase, space: RelaxedVariableSpace) -> List[ConeLink]:
    links = []
    for corr in case.corridors:
        fl = _Flows(space, corr)
        links.append(ConeLink(
            corridor=corr.index,
            label=corr.label,
            d=[
                {fl.cij: 2.0},
                {fl.s: 2.0},
                {fl.cii: 1.0, fl.cjj: -1.0},
                {fl.cii: 1.0, fl.cjj: 1.0},
            ],
        ))
    return links


def _costs(case: NetworkCase, space: RelaxedVariableSpace) -> Tuple[Terms, Terms, float]:
    ys = space.y_s
    cost_s: Terms = {}
    for g_idx, gen in enumerate(case.generators):
        if gen.cost_a:
            cost_s[ys.at("P_g", g_idx)] = gen.cost_a
    for i in range(case.n_buses):
        cost_s[ys.at("CP_d", i)] = case.gamma_d
        cost_s[ys.at("CP_r", i)] = case.gamma_r
    cost_m = {x: case.corridors[c].install_cost for x, (c, _) in enumerate(case.candidate_lines)}
    return cost_s, cost_m, float(sum(gen.cost_b for gen in case.generators))


def build_deterministic_tep(case: NetworkCase, box: Optional[UncertaintyBox] = None) -> TepModel:
    """Non-convex AC TEP over rectangular voltages and explicit voltage products

    With a box the injection rows carry xi columns, which is what the
    ACOPF at a sampled realization needs.
    """
    space = _variable_space(case, angles=False, rectangular=True)
    ys = space.y_s
    definitions = []
    for i, bus in enumerate(case.buses):
        e, f = ys.at("e", i), ys.at("f", i)
        definitions.append(QuadraticEquality(
            label=f"c_ii[{bus.id}]", family="voltage product",
            linear={ys.at("c_ii", i): 1.0}, quadratic=[(e, e, -1.0), (f, f, -1.0)],
        ))
    for corr in case.corridors:
        ei, fi = ys.at("e", corr.i), ys.at("f", corr.i)
        ej, fj = ys.at("e", corr.j), ys.at("f", corr.j)
        definitions.append(QuadraticEquality(
            label=f"c_ij[{corr.label}]", family="voltage product",
            linear={ys.at("c_ij", corr.index): 1.0}, quadratic=[(ei, ej, -1.0), (fi, fj, -1.0)],
        ))
        definitions.append(QuadraticEquality(
            label=f"s_ij[{corr.label}]", family="voltage product",
            linear={ys.at("s_ij", corr.index): 1.0}, quadratic=[(fi, ej, -1.0), (fj, ei, 1.0)],
        ))
    ref = case.bus_index[case.reference_bus]
    definitions.append(QuadraticEquality(
        label=f"f_ref[{case.reference_bus}]", family="voltage product", linear={ys.at("f", ref): 1.0},
    ))

    cost_s, cost_m, constant = _costs(case, space)
    model = TepModel(
        kind="nonconvex", case=case, box=box, space=space,
        rows=_network_rows(case, space, angles=False, uncertain=box is not None),
        definitions=definitions, cost_s=cost_s, cost_m=cost_m, cost_constant=constant,
    )
    logger.debug(f"Built non-convex TEP for {case.name}: {ys.size} variables, {len(model.rows)} linear rows")
    return model


def build_relaxed_tep(case: NetworkCase) -> TepModel:
    """Rotated-cone relaxation with angle box and angle-consistency rows"""
    space = _variable_space(case, angles=True, rectangular=False)
    cost_s, cost_m, constant = _costs(case, space)
    return TepModel(
        kind="relaxed", case=case, space=space,
        rows=_network_rows(case, space, angles=True, uncertain=False),
        cones=_cone_links(case, space),
        cost_s=cost_s, cost_m=cost_m, cost_constant=constant,
    )


def build_uncertain_tep(case: NetworkCase, box: UncertaintyBox) -> TepModel:
    """Relaxation with load and RES injections shifted by xi inside the box"""
    if box.size != 2 * case.n_buses:
        raise AssemblyError(f"box has {box.size} components, expected {2 * case.n_buses}")
    space = _variable_space(case, angles=True, rectangular=False)
    cost_s, cost_m, constant = _costs(case, space)
    return TepModel(
        kind="robust", case=case, box=box, space=space,
        rows=_network_rows(case, space, angles=True, uncertain=True),
        cones=_cone_links(case, space),
        cost_s=cost_s, cost_m=cost_m, cost_constant=constant,
    )


def _dense(terms: Terms, n: int) -> np.ndarray:
    v = np.zeros(n)
    for k, val in terms.items():
        v[k] = val
    return v


def _block(rows: List[LinearRow], n_s: int, n_m: int, n_xi: int):
    """(Y, M, X, rhs, infos) of one block"""
    position = {row.label: k for k, row in enumerate(rows)}

    def matrix(attr: str, n: int) -> sp.csr_matrix:
        r, c, v = [], [], []
        for k, row in enumerate(rows):
            for col, val in getattr(row, attr).items():
                r.append(k)
                c.append(col)
                v.append(val)
        return sp.csr_matrix(
            (np.asarray(v, dtype=float), (np.asarray(r, dtype=int), np.asarray(c, dtype=int))),
            shape=(len(rows), n),
        )

    infos = [
        RowInfo(
            label=row.label, family=row.family, dual=row.dual, side=row.side,
            pair=position[row.pair] if row.pair is not None else None,
        )
        for row in rows
    ]
    rhs = np.array([row.rhs for row in rows], dtype=float)
    return matrix("y", n_s), matrix("m", n_m), matrix("xi", n_xi), rhs, infos


def assemble_compact(model: TepModel) -> CompactRobustModel:
    """Stack the named rows of a relaxed or robust model into sparse blocks

    Costs stay hourly; reports scale them by the case annualization.

    Raises:
        AssemblyError: For a non-convex model or inconsistent dimensions
    """
    if model.kind == "nonconvex":
        raise AssemblyError("the non-convex model has no compact block form")
    case = model.case
    box = model.box or build_uncertainty_box(case, 0.0, 0.0)
    space = model.space
    n_s, n_m, n_xi = space.y_s.size, space.y_m.size, box.size

    blocks = {name: _block(model.rows_in(name), n_s, n_m, n_xi) for name in ("A", "TG", "Be", "Bie")}
    Y_a, A, X_a, h, info_a = blocks["A"]
    G, T, X_tg, r, info_tg = blocks["TG"]
    B_e, M_e, J_e, t_e, info_e = blocks["Be"]
    B_ie, M_ie, J_ie, t_ie, info_ie = blocks["Bie"]
    if Y_a.nnz or X_a.nnz or X_tg.nnz or M_e.nnz or M_ie.nnz:
        raise AssemblyError("a row carries terms outside its block's variable set")

    u_rows, u_cols, u_vals = [], [], []
    for c, link in enumerate(model.cones):
        for k, terms in enumerate(link.d):
            for col, val in terms.items():
                u_rows.append(4 * c + k)
                u_cols.append(col)
                u_vals.append(-val)
    U = sp.csr_matrix(
        (np.asarray(u_vals, dtype=float), (np.asarray(u_rows, dtype=int), np.asarray(u_cols, dtype=int))),
        shape=(4 * len(model.cones), n_s),
    )
    if U.shape[0] != space.y_cone.size:
        raise AssemblyError(f"U has {U.shape[0]} rows, y_cone has {space.y_cone.size} entries")

    compact = CompactRobustModel(
        case=case, box=box, space=space,
        F_m=_dense(model.cost_m, n_m),
        F_s=_dense(model.cost_s, n_s),
        F_c=model.cost_constant,
        A=A, h=h, T=T, G=G, r=r,
        B_e=B_e, t_e=t_e, J_e=J_e,
        B_ie=B_ie, t_ie=t_ie, J_ie=J_ie,
        U=U, H=H_CONE.copy(),
        row_info={"A": info_a, "TG": info_tg, "Be": info_e, "Bie": info_ie},
        cone_labels=[link.label for link in model.cones],
    )
    logger.debug(f"Assembled compact model for {case.name}: {compact.structure()}")
    return compact


def evaluate_named_rows(
    model: TepModel,
    y_s: np.ndarray,
    y_m: np.ndarray,
    xi: np.ndarray,
) -> Dict[str, np.ndarray]:
    """lhs - rhs of every named row, per block, in build order"""
    return {
        block: np.array([row.residual(y_s, y_m, xi) for row in model.rows_in(block)])
        for block in ("A", "TG", "Be", "Bie")
    }


def evaluate_blocks(
    model: CompactRobustModel,
    y_s: np.ndarray,
    y_m: np.ndarray,
    xi: np.ndarray,
) -> Dict[str, np.ndarray]:
    """The same residuals computed from the block matrices"""
    return {
        "A": model.A @ y_m - model.h,
        "TG": model.T @ y_m + model.G @ y_s - model.r,
        "Be": model.B_e @ y_s + model.J_e @ xi - model.t_e,
        "Bie": model.B_ie @ y_s + model.J_ie @ xi - model.t_ie,
    }


class MergedRows(BaseModel):
    """Opposite-side row pairs of one block folded into lo <= a.y <= hi rows"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: sp.csr_matrix
    lo: np.ndarray
    hi: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    labels: List[str]


def merge_pairs(Y: sp.csr_matrix, rhs: np.ndarray, infos: List[RowInfo]) -> MergedRows:
    """Fold each upper/lower pair into one interval row

    A pair (a.y <= rhs_u, -a.y <= rhs_l) becomes -rhs_l <= a.y <= rhs_u; an
    equality row keeps lo = hi = rhs. `lower` is -1 where a row had no partner.
    """
    keep, lo, hi, lower, labels = [], [], [], [], []
    for k, info in enumerate(infos):
        if info.side == "lower":
            continue
        keep.append(k)
        if info.side == "equality":
            lo.append(rhs[k])
            hi.append(rhs[k])
            lower.append(-1)
        elif info.side == "upper":
            lo.append(-rhs[info.pair])
            hi.append(rhs[k])
            lower.append(info.pair)
        else:
            lo.append(-np.inf)
            hi.append(rhs[k])
            lower.append(-1)
        labels.append(info.label.removesuffix(".hi"))
    keep_idx = np.asarray(keep, dtype=int)
    return MergedRows(
        A=Y[keep_idx] if keep_idx.size else sp.csr_matrix((0, Y.shape[1])),
        lo=np.asarray(lo, dtype=float),
        hi=np.asarray(hi, dtype=float),
        upper=keep_idx,
        lower=np.asarray(lower, dtype=int),
        labels=labels,
    )


def fixed_topology_rows(
    model: TepModel,
    y_m: np.ndarray,
    xi: Optional[np.ndarray] = None,
) -> QuadraticSystem:
    """Rows of the non-convex TEP with every binary frozen and xi fixed

    With x = 1 the big-M link rows close to equalities, so an installed
    line behaves as part of the topology; with x = 0 its flows are pinned to 0.

    Raises:
        AssemblyError: For a relaxed model, a wrong plan length or an empty interval
    """
    if model.kind != "nonconvex":
        raise AssemblyError("fixed-topology rows need the non-convex model")
    case = model.case
    space = model.space
    n_s, n_m, n_xi = space.y_s.size, space.y_m.size, 2 * case.n_buses
    y_m = np.asarray(y_m, dtype=float)
    if y_m.shape != (n_m,):
        raise AssemblyError(f"plan has {y_m.size} entries, expected {n_m}")
    xi = np.zeros(n_xi) if xi is None else np.asarray(xi, dtype=float)
    if xi.shape != (n_xi,):
        raise AssemblyError(f"xi has {xi.size} entries, expected {n_xi}")

    rows = QuadraticRows(n_s)
    for block in ("TG", "Be", "Bie"):
        Y, M, X, rhs, infos = _block(model.rows_in(block), n_s, n_m, n_xi)
        merged = merge_pairs(Y, rhs - M @ y_m - X @ xi, infos)
        rows.add_linear_block(merged.A, merged.lo, merged.hi, merged.labels)
    for definition in model.definitions:
        rows.add(definition.linear, definition.quadratic, lo=0.0, hi=0.0, label=definition.label)
    return rows.build()


def fixed_topology_problem(
    model: TepModel,
    y_m: np.ndarray,
    xi: Optional[np.ndarray] = None,
    x0: Optional[np.ndarray] = None,
) -> Tuple[NlpProblem, RowSplit, QuadraticSystem]:
    """Non-convex TEP at a frozen plan: an ACOPF with curtailment

    The objective is the hourly operating cost, F_s'y_s + F_c.
    """
    case = model.case
    system = fixed_topology_rows(model, y_m, xi)
    cost = _dense(model.cost_s, system.n)
    start = nonconvex_start(model) if x0 is None else x0
    problem, split = build_nlp(
        system, cost, start,
        cost_constant=model.cost_constant,
        name=f"{case.name}-acopf",
    )
    return problem, split, system


def nonconvex_start(model: TepModel, rng: Optional[np.random.Generator] = None, spread: float = 0.05) -> np.ndarray:
    """Flat start e = 1, f = 0, optionally perturbed by +-spread"""
    ys = model.space.y_s
    case = model.case
    x = np.zeros(ys.size)
    e = np.ones(case.n_buses)
    f = np.zeros(case.n_buses)
    if rng is not None:
        e = e * (1.0 + rng.uniform(-spread, spread, case.n_buses))
        f = rng.uniform(-spread, spread, case.n_buses)
        f[case.bus_index[case.reference_bus]] = 0.0
    x[ys.span("e")] = e
    x[ys.span("f")] = f
    x[ys.span("c_ii")] = e ** 2 + f ** 2
    for corr in case.corridors:
        x[ys.at("c_ij", corr.index)] = e[corr.i] * e[corr.j] + f[corr.i] * f[corr.j]
        x[ys.at("s_ij", corr.index)] = f[corr.i] * e[corr.j] - f[corr.j] * e[corr.i]
    for g_idx, gen in enumerate(case.generators):
        x[ys.at("P_g", g_idx)] = 0.5 * (gen.p_min + gen.p_max)
        x[ys.at("Q_g", g_idx)] = 0.5 * (gen.q_min + gen.q_max)
    return x


def dump_compact(model: CompactRobustModel, path: Union[str, Path]) -> Path:
    """Write block shapes, non-zeros and index maps as JSON"""
    dump = CompactModelDump(
        case=model.case.name,
        u_d=model.box.u_d,
        u_r=model.box.u_r,
        blocks=model.structure(),
        H=model.H.tolist(),
        variables={
            "y_s": model.space.y_s.names,
            "y_cone": model.space.y_cone.names,
            "y_m": model.space.y_m.names,
        },
        rows=model.row_info,
        cones=model.cone_labels,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump.model_dump_json(indent=2))
    logger.info(f"Compact model written to {path}")
    return path
