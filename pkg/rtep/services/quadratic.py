"""Sparse rows lo <= a.x + sum(q * x_i * x_j) + const <= hi

Every continuous model in the package (the relaxed slave, the rectangular
ACOPF and the non-convex TEP at a fixed topology) is a set of such rows with
a linear objective, so one evaluator provides values, Jacobians and
Lagrangian Hessians for all of them.
"""

import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict

from rtep.core.exceptions import AssemblyError
from rtep.models.solver import NlpProblem

logger = logging.getLogger(__name__)

# Rows whose interval is narrower than this are treated as equalities
EQUALITY_WIDTH = 1e-10


class QuadraticRows:
    """Row accumulator over a fixed number of variables"""

    def __init__(self, n: int):
        self.n = n
        self._lin_rows: List[np.ndarray] = []
        self._lin_cols: List[np.ndarray] = []
        self._lin_vals: List[np.ndarray] = []
        self._q_rows: List[int] = []
        self._q_i: List[int] = []
        self._q_j: List[int] = []
        self._q_vals: List[float] = []
        self.constant: List[float] = []
        self.lo: List[float] = []
        self.hi: List[float] = []
        self.labels: List[str] = []

    @property
    def m(self) -> int:
        return len(self.lo)

    def add(
        self,
        linear: Optional[dict] = None,
        quadratic: Iterable[Tuple[int, int, float]] = (),
        lo: float = -np.inf,
        hi: float = np.inf,
        constant: float = 0.0,
        label: str = "",
    ) -> int:
        """Add one row and return its index"""
        row = self.m
        if linear:
            cols = np.fromiter(linear.keys(), dtype=int)
            vals = np.fromiter(linear.values(), dtype=float)
            self._lin_rows.append(np.full(cols.size, row))
            self._lin_cols.append(cols)
            self._lin_vals.append(vals)
        for i, j, q in quadratic:
            self._q_rows.append(row)
            self._q_i.append(i)
            self._q_j.append(j)
            self._q_vals.append(q)
        self.constant.append(constant)
        self.lo.append(lo)
        self.hi.append(hi)
        self.labels.append(label)
        return row

    def add_linear_block(
        self,
        A: sp.spmatrix,
        lo: np.ndarray,
        hi: np.ndarray,
        labels: Sequence[str],
    ) -> np.ndarray:
        """Add the rows of a sparse matrix at once"""
        A = sp.coo_matrix(A)
        if A.shape[1] != self.n:
            raise AssemblyError(f"block has {A.shape[1]} columns, expected {self.n}")
        first = self.m
        self._lin_rows.append(A.row + first)
        self._lin_cols.append(A.col)
        self._lin_vals.append(A.data.astype(float))
        self.constant.extend([0.0] * A.shape[0])
        self.lo.extend(np.broadcast_to(lo, A.shape[0]).tolist())
        self.hi.extend(np.broadcast_to(hi, A.shape[0]).tolist())
        self.labels.extend(labels)
        return np.arange(first, self.m)

    def add_square_form(
        self,
        vectors: Sequence[Sequence[Tuple[int, float]]],
        weights: Sequence[float],
        lo: float = -np.inf,
        hi: float = np.inf,
        label: str = "",
    ) -> int:
        """Add sum_k w_k (v_k . x)^2 as one row"""
        terms = []
        for vector, weight in zip(vectors, weights):
            for i, a in vector:
                for j, b in vector:
                    terms.append((i, j, weight * a * b))
        return self.add(quadratic=terms, lo=lo, hi=hi, label=label)

    def build(self) -> "QuadraticSystem":
        m = self.m
        if self._lin_rows:
            rows = np.concatenate(self._lin_rows)
            cols = np.concatenate(self._lin_cols)
            vals = np.concatenate(self._lin_vals)
        else:
            rows = cols = np.zeros(0, dtype=int)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))
        A.sum_duplicates()
        return QuadraticSystem(
            n=self.n,
            A=A,
            constant=np.asarray(self.constant, dtype=float),
            q_row=np.asarray(self._q_rows, dtype=int),
            q_i=np.asarray(self._q_i, dtype=int),
            q_j=np.asarray(self._q_j, dtype=int),
            q_val=np.asarray(self._q_vals, dtype=float),
            lo=np.asarray(self.lo, dtype=float),
            hi=np.asarray(self.hi, dtype=float),
            labels=list(self.labels),
        )


class QuadraticSystem(BaseModel):
    """Immutable evaluator for a finished set of rows"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int
    A: sp.csr_matrix
    constant: np.ndarray
    q_row: np.ndarray
    q_i: np.ndarray
    q_j: np.ndarray
    q_val: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    labels: List[str]

    @property
    def m(self) -> int:
        return self.lo.size

    def value(self, x: np.ndarray) -> np.ndarray:
        v = self.A @ x + self.constant
        if self.q_row.size:
            v += np.bincount(self.q_row, weights=self.q_val * x[self.q_i] * x[self.q_j], minlength=self.m)
        return v

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        if not self.q_row.size:
            return self.A
        rows = np.concatenate([self.q_row, self.q_row])
        cols = np.concatenate([self.q_i, self.q_j])
        vals = np.concatenate([self.q_val * x[self.q_j], self.q_val * x[self.q_i]])
        return (self.A + sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))).tocsr()

    def hessian(self, weights: np.ndarray) -> sp.csr_matrix:
        """Hessian of sum_r weights_r * row_r"""
        if not self.q_row.size:
            return sp.csr_matrix((self.n, self.n))
        w = weights[self.q_row] * self.q_val
        H = sp.csr_matrix((w, (self.q_i, self.q_j)), shape=(self.n, self.n))
        return (H + H.T).tocsr()

    def violation(self, x: np.ndarray) -> np.ndarray:
        """Per-row amount by which the interval is missed (0 when satisfied)"""
        v = self.value(x)
        return np.maximum(np.maximum(self.lo - v, v - self.hi), 0.0)


class RowSplit(BaseModel):
    """Where each row of a QuadraticSystem went in the NLP"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eq_rows: np.ndarray
    upper_rows: np.ndarray
    lower_rows: np.ndarray

    def row_multipliers(self, m: int, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """Signed multiplier per row: positive when pushing against hi, negative against lo"""
        nu = np.zeros(m)
        nu[self.eq_rows] = lam
        n_up = self.upper_rows.size
        np.add.at(nu, self.upper_rows, mu[:n_up])
        np.subtract.at(nu, self.lower_rows, mu[n_up:])
        return nu


def build_nlp(
    system: QuadraticSystem,
    cost: np.ndarray,
    x0: np.ndarray,
    cost_constant: float = 0.0,
    name: str = "nlp",
    xmin: Optional[np.ndarray] = None,
    xmax: Optional[np.ndarray] = None,
) -> Tuple[NlpProblem, RowSplit]:
    """Turn interval rows and a linear cost into an NlpProblem

    Rows with lo == hi become equalities, finite sides become h(x) <= 0 rows.
    Variable bounds are passed through to the solver (free when omitted).

    Raises:
        AssemblyError: If a row has lo > hi
    """
    lo, hi = system.lo, system.hi
    bad = np.flatnonzero(lo > hi + EQUALITY_WIDTH)
    if bad.size:
        k = bad[0]
        raise AssemblyError(f"row '{system.labels[k]}' has an empty interval [{lo[k]}, {hi[k]}]")
    is_eq = np.isfinite(lo) & np.isfinite(hi) & (hi - lo <= EQUALITY_WIDTH)
    eq_rows = np.flatnonzero(is_eq)
    upper_rows = np.flatnonzero(~is_eq & np.isfinite(hi))
    lower_rows = np.flatnonzero(~is_eq & np.isfinite(lo))
    split = RowSplit(eq_rows=eq_rows, upper_rows=upper_rows, lower_rows=lower_rows)
    eq_target = 0.5 * (lo[eq_rows] + hi[eq_rows])
    cost = np.asarray(cost, dtype=float)

    def objective(x):
        return float(cost @ x + cost_constant), cost

    def constraints(x):
        v = system.value(x)
        J = system.jacobian(x)
        g = v[eq_rows] - eq_target
        h = np.concatenate([v[upper_rows] - hi[upper_rows], lo[lower_rows] - v[lower_rows]])
        dg = J[eq_rows]
        dh = sp.vstack([J[upper_rows], -J[lower_rows]], format="csr")
        return h, g, dh, dg

    def hessian(x, lam, mu, cost_mult=1.0):
        return system.hessian(split.row_multipliers(system.m, lam, mu))

    problem = NlpProblem(
        n=system.n,
        n_eq=eq_rows.size,
        n_ineq=upper_rows.size + lower_rows.size,
        x0=x0,
        objective=objective,
        constraints=constraints,
        hessian=hessian,
        xmin=np.full(system.n, -np.inf) if xmin is None else np.asarray(xmin, dtype=float),
        xmax=np.full(system.n, np.inf) if xmax is None else np.asarray(xmax, dtype=float),
        name=name,
    )
    return problem, split
