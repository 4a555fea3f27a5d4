"""Artifact writers: JSON documents from models and unit-labelled CSV tables"""

import logging
from pathlib import Path
from typing import Iterable, List, Union

import pandas as pd
from pydantic import BaseModel

from rtep.models.network import NetworkCase
from rtep.models.results import (
    BendersState,
    GapRecord,
    McsReport,
    OptimalityGapRecord,
    SweepRow,
    TepPlan,
)

logger = logging.getLogger(__name__)

# Fixed float format so identical runs write identical bytes
FLOAT_FORMAT = "%.10g"

PathLike = Union[str, Path]


def ensure_dir(path: PathLike) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(document: BaseModel, path: PathLike) -> Path:
    """Write a pydantic model as indented JSON"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(document.model_dump_json(indent=2) + "\n")
    logger.info(f"Wrote {target}")
    return target


def read_plan(path: PathLike) -> TepPlan:
    return TepPlan.model_validate_json(Path(path).read_text())


def write_table(table: pd.DataFrame, path: PathLike) -> Path:
    """Write a table as CSV"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(target, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {target} ({len(table)} rows)")
    return target


def trace_table(state: BendersState, case: NetworkCase, labels: List[str]) -> pd.DataFrame:
    """Benders trace, one row per iteration"""
    rows = []
    for snap in state.snapshots:
        installed = [label for label, x in zip(labels, snap.y_m) if x > 0.5]
        rows.append({
            "p": snap.p,
            "LB [$/yr]": case.annualize(snap.lb),
            "UB [$/yr]": case.annualize(snap.ub),
            "gap [-]": snap.gap,
            "investment [$/yr]": case.annualize(snap.investment),
            "SD [$/yr]": case.annualize(snap.sd),
            "plan": " ".join(installed) or "none",
            "wall time [s]": snap.wall_time,
        })
    return pd.DataFrame(rows, columns=[
        "p", "LB [$/yr]", "UB [$/yr]", "gap [-]", "investment [$/yr]", "SD [$/yr]", "plan", "wall time [s]",
    ])


def mcs_table(report: McsReport, case: NetworkCase) -> pd.DataFrame:
    """Per-sample MCS rows with xi split into named load and RES columns"""
    buses = [bus.id for bus in case.buses]
    xi_columns = [f"xi_d[{b}] [pu]" for b in buses] + [f"xi_r[{b}] [pu]" for b in buses]
    rows = []
    for sample in report.rows:
        row = {"sample": sample.index}
        row.update(dict(zip(xi_columns, sample.xi)))
        row.update({
            "converged": sample.converged,
            "acceptable": sample.acceptable,
            "objective [$/yr]": case.annualize(sample.objective),
            "CP_d [pu]": sample.cp_d,
            "CP_r [pu]": sample.cp_r,
            "violation [pu]": sample.violation,
            "feasible": sample.feasible,
        })
        rows.append(row)
    columns = ["sample", *xi_columns, "converged", "acceptable", "objective [$/yr]", "CP_d [pu]", "CP_r [pu]",
               "violation [pu]", "feasible"]
    return pd.DataFrame(rows, columns=columns)


def sweep_table(rows: Iterable[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "u_d [%]": row.u_d,
                "u_r [%]": row.u_r,
                "plan": row.plan,
                "investment [$/yr]": row.investment,
                "operating [$/yr]": row.operating,
                "total [$/yr]": row.total,
                "increase [%]": row.increase,
                "CP_d [pu]": row.cp_d,
                "CP_r [pu]": row.cp_r,
                "iterations": row.iterations,
                "converged": row.converged,
            }
            for row in rows
        ],
        columns=[
            "u_d [%]", "u_r [%]", "plan", "investment [$/yr]", "operating [$/yr]", "total [$/yr]",
            "increase [%]", "CP_d [pu]", "CP_r [pu]", "iterations", "converged",
        ],
    )


def gap_table(records: Iterable[GapRecord], optimality: Iterable[OptimalityGapRecord] = ()) -> pd.DataFrame:
    """Duality-gap rows, followed by optimality-gap rows when given"""
    rows = [
        {
            "system": r.system,
            "topology": r.topology,
            "kind": "duality",
            "primal [$/yr]": r.primal,
            "dual [$/yr]": r.dual,
            "relative gap [-]": r.relative_gap,
            "dual residual [-]": r.dual_residual,
        }
        for r in records
    ]
    rows += [
        {
            "system": r.system,
            "topology": r.topology,
            "kind": "optimality",
            "primal [$/yr]": r.nonconvex,
            "dual [$/yr]": r.relaxed,
            "relative gap [-]": r.relative_gap,
            "dual residual [-]": float("nan"),
        }
        for r in optimality
    ]
    return pd.DataFrame(rows, columns=[
        "system", "topology", "kind", "primal [$/yr]", "dual [$/yr]", "relative gap [-]", "dual residual [-]",
    ])
