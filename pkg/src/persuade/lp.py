"""Dense two-phase simplex for the small LPs used in this package.

Every program here has at most a few dozen variables, so a dense tableau with
Bland's rule is plenty.  Rows are equilibrated (scaled by their largest
coefficient) before solving, which matters for instances whose utility
differences are many orders of magnitude below one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalFailure

LE, GE, EQ = "<=", ">=", "="

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-11
COST_TOL = 1e-10


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[float, ...]
    relation: str
    rhs: float

    def __post_init__(self):
        if self.relation not in (LE, GE, EQ):
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass
class LinearProgram:
    """maximize ``objective @ x`` subject to ``constraints`` and ``bounds``.

    ``bounds`` holds one ``(lower, upper)`` pair per variable; ``None`` means
    the default ``(0, inf)``.  Use ``-math.inf``/``math.inf`` for free sides.
    """

    objective: Sequence[float]
    constraints: list[Constraint] = field(default_factory=list)
    bounds: list[tuple[float, float]] | None = None

    def __post_init__(self):
        n = len(self.objective)
        if n < 1:
            raise ValueError("a linear program needs at least one variable")
        for con in self.constraints:
            if len(con.coeffs) != n:
                raise ValueError("constraint width does not match the variable count")
        if self.bounds is not None and len(self.bounds) != n:
            raise ValueError("one bound pair per variable is required")

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def add(self, coeffs, relation: str, rhs: float) -> None:
        self.constraints.append(Constraint(tuple(float(c) for c in coeffs), relation, float(rhs)))


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective_value: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _substitution(lp: LinearProgram):
    """Express x = offset + S @ z with z >= 0, plus extra upper-bound rows."""
    n = lp.n_vars
    bounds = lp.bounds or [(0.0, math.inf)] * n
    cols: list[np.ndarray] = []
    offset = np.zeros(n)
    upper_rows: list[tuple[int, float]] = []  # (z index, bound)
    for i, (lo, hi) in enumerate(bounds):
        lo = -math.inf if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        if lo > hi:
            return None
        e = np.zeros(n)
        e[i] = 1.0
        if math.isfinite(lo):
            offset[i] = lo
            cols.append(e)
            if math.isfinite(hi):
                upper_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            offset[i] = hi
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    return offset, np.array(cols).T, upper_rows


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    column = tab[:, col].copy()
    column[row] = 0.0
    tab -= np.outer(column, tab[row])


def _run(tab: np.ndarray, basis: list[int], allowed: int, max_iter: int) -> str:
    """Minimize the objective row of ``tab`` over columns ``< allowed``."""
    m = tab.shape[0] - 1
    for _ in range(max_iter):
        costs = tab[m, :allowed]
        entering = next((j for j in range(allowed) if costs[j] < -COST_TOL), None)
        if entering is None:
            return "optimal"
        col = tab[:m, entering]
        candidates = [i for i in range(m) if col[i] > PIVOT_TOL]
        if not candidates:
            if np.any(col > 0):
                raise NumericalFailure("only sub-tolerance pivots available")
            return "unbounded"
        ratios = [(tab[i, -1] / col[i], basis[i], i) for i in candidates]
        best = min(r for r, _, _ in ratios)
        # Bland: among (near-)tied ratios leave the lowest-index basic variable
        tied = [(b, i) for r, b, i in ratios if r <= best + 1e-12 * max(1.0, abs(best))]
        _, leaving = min(tied)
        _pivot(tab, leaving, entering)
        basis[leaving] = entering
    raise NumericalFailure("simplex iteration limit reached")


def solve(lp: LinearProgram) -> LpSolution:
    sub = _substitution(lp)
    if sub is None:
        return LpSolution("infeasible", None, math.nan)
    offset, S, upper_rows = sub
    nz = S.shape[1]
    c = np.asarray(lp.objective, dtype=float)

    rows: list[tuple[np.ndarray, str, float]] = []
    for con in lp.constraints:
        a = np.asarray(con.coeffs, dtype=float)
        rows.append((a @ S, con.relation, con.rhs - a @ offset))
    for j, ub in upper_rows:
        e = np.zeros(nz)
        e[j] = 1.0
        rows.append((e, LE, ub))

    kept = []
    for a, rel, b in rows:
        scale = np.max(np.abs(a)) if a.size else 0.0
        if scale == 0.0:
            ok = {LE: 0.0 <= b + FEAS_TOL, GE: 0.0 >= b - FEAS_TOL, EQ: abs(b) <= FEAS_TOL}[rel]
            if not ok:
                return LpSolution("infeasible", None, math.nan)
            continue
        a, b = a / scale, b / scale
        if b < 0:
            a, b = -a, -b
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        kept.append((a, rel, b))

    m = len(kept)
    n_slack = sum(rel != EQ for _, rel, _ in kept)
    n_art = sum(rel != LE for _, rel, _ in kept)
    width = nz + n_slack + n_art
    tab = np.zeros((m + 1, width + 1))
    basis: list[int] = []
    s_idx, a_idx = nz, nz + n_slack
    art_rows = []
    for i, (a, rel, b) in enumerate(kept):
        tab[i, :nz] = a
        tab[i, -1] = b
        if rel == LE:
            tab[i, s_idx] = 1.0
            basis.append(s_idx)
            s_idx += 1
        else:
            if rel == GE:
                tab[i, s_idx] = -1.0
                s_idx += 1
            tab[i, a_idx] = 1.0
            basis.append(a_idx)
            art_rows.append(i)
            a_idx += 1

    max_iter = 50 * (m + width) + 1000
    first_art = nz + n_slack
    if n_art:
        tab[m, first_art:width] = 1.0
        for i in art_rows:
            tab[m] -= tab[i]
        _run(tab, basis, width, max_iter)
        if -tab[m, -1] > FEAS_TOL:
            return LpSolution("infeasible", None, math.nan)
        # drive zero-level artificials out of the basis, dropping redundant rows
        i = 0
        while i < m:
            if basis[i] >= first_art:
                nonzero = [j for j in range(first_art) if abs(tab[i, j]) > 1e-9]
                if nonzero:
                    _pivot(tab, i, nonzero[0])
                    basis[i] = nonzero[0]
                else:
                    tab = np.delete(tab, i, axis=0)
                    del basis[i]
                    m -= 1
                    continue
            i += 1
        tab = np.delete(tab, np.s_[first_art:width], axis=1)

    # phase two: minimize -c @ x
    cz = c @ S
    full_cost = np.zeros(first_art)
    full_cost[:nz] = -cz
    tab[m, :] = 0.0
    tab[m, :first_art] = full_cost
    for i, j in enumerate(basis):
        if full_cost[j] != 0.0:
            tab[m] -= full_cost[j] * tab[i]
    status = _run(tab, basis, first_art, max_iter)
    if status == "unbounded":
        return LpSolution("unbounded", None, math.inf)

    z = np.zeros(first_art)
    for i, j in enumerate(basis):
        z[j] = max(tab[i, -1], 0.0)
    x = offset + S @ z[:nz]
    return LpSolution("optimal", x, float(c @ x))
