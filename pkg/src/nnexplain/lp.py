"""Exact LP feasibility by phase-1 simplex over ``mpq``.

Bounded-variable tableau method: every column lives in ``[0, u]`` after
shifting by its finite bound (free columns are split), nonbasic columns sit
at either bound, and one artificial per row is used only where a slack
cannot start in the basis. Bland's smallest-index rule picks both the
entering and the leaving column, so the method always terminates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .rational import ONE, ZERO, to_q


@dataclass(frozen=True)
class LpProblem:
    """Pure feasibility problem: ``bounds`` maps var -> (lo, hi), None = infinite."""

    bounds: Mapping
    rows: Sequence = ()


@dataclass(frozen=True)
class LpVerdict:
    feasible: bool
    witness: Optional[dict] = None
    pivots: int = 0

    @property
    def status(self) -> str:
        return "feasible" if self.feasible else "infeasible"


INFEASIBLE = LpVerdict(False)


def feasible(p: LpProblem) -> LpVerdict:
    names = list(p.bounds)
    pos = {v: k for k, v in enumerate(names)}
    lo = [None if b[0] is None else to_q(b[0]) for b in p.bounds.values()]
    hi = [None if b[1] is None else to_q(b[1]) for b in p.bounds.values()]
    rows = []
    for row in p.rows:
        try:
            rows.append((tuple((c, pos[v]) for c, v in row.terms), row.sense, row.rhs))
        except KeyError as e:
            raise KeyError(f"row {row.name} uses undeclared var {e.args[0]}") from None
    ok, values, pivots = solve_rows(lo, hi, rows)
    if not ok:
        return LpVerdict(False, None, pivots)
    witness = dict(zip(names, values))
    for row in p.rows:
        if not row.holds(witness):
            raise AssertionError(f"simplex witness violates {row.name}")
    return LpVerdict(True, witness, pivots)


def _row_ok(act, sense, rhs) -> bool:
    if sense == "<=":
        return act <= rhs
    if sense == ">=":
        return act >= rhs
    return act == rhs


def solve_rows(lo: Sequence, hi: Sequence, rows: Sequence, anchor: Optional[Sequence] = None):
    """Index-based core of :func:`feasible`.

    ``lo``/``hi`` hold one bound per variable (None = infinite); each row is
    ``(((coef, var_index), ...), sense, rhs)``. Returns
    ``(feasible, values, pivots)`` with ``values`` a full assignment (checked
    against every row) or None.

    ``anchor`` optionally gives a preferred value per variable (None = no
    preference). Anchored columns start at that value, so variables the
    simplex never needs to move keep it in the witness.
    """
    n = len(lo)
    for k in range(n):
        if lo[k] is not None and hi[k] is not None and lo[k] > hi[k]:
            return False, None, 0

    # x_k = offset[k] + sum(sign * t_col) over cols_of[k]
    cols_of: list = [None] * n
    offset: list = [ZERO] * n
    upper: list = []
    for k in range(n):
        l, h = lo[k], hi[k]
        a = anchor[k] if anchor is not None else None
        if l is not None and l == h:
            offset[k] = l
            cols_of[k] = ()
        elif a is not None and (l is None or l < a) and (h is None or a < h):
            offset[k] = a
            cols_of[k] = ((len(upper), 1), (len(upper) + 1, -1))
            upper.extend((None if h is None else h - a, None if l is None else a - l))
        elif l is not None:
            offset[k] = l
            cols_of[k] = ((len(upper), 1),)
            upper.append(None if h is None else h - l)
        elif h is not None:
            offset[k] = h
            cols_of[k] = ((len(upper), -1),)
            upper.append(None)
        else:
            cols_of[k] = ((len(upper), 1), (len(upper) + 1, -1))
            upper.extend((None, None))
    n_struct = len(upper)

    sparse_rows = []  # (dict col -> coef, sense, rhs)
    for terms, sense, rhs in rows:
        coefs: dict = {}
        for c, k in terms:
            if not c:
                continue
            rhs = rhs - c * offset[k]
            for col, sign in cols_of[k]:
                coefs[col] = coefs.get(col, ZERO) + (c if sign > 0 else -c)
        coefs = {col: c for col, c in coefs.items() if c}
        if not coefs:
            if not _row_ok(ZERO, sense, rhs):
                return False, None, 0
            continue
        sparse_rows.append((coefs, sense, rhs))

    n_slack = sum(1 for _, s, _ in sparse_rows if s != "=")
    ncols = n_struct + n_slack
    upper.extend([None] * n_slack)

    T = []
    beta = []
    basis = []
    slack = n_struct
    for i, (coefs, sense, rhs) in enumerate(sparse_rows):
        row = [ZERO] * ncols
        for col, c in coefs.items():
            row[col] = c
        scol = None
        if sense != "=":
            scol = slack
            row[scol] = ONE if sense == "<=" else -ONE
            slack += 1
        if rhs < 0:
            row = [-a for a in row]
            rhs = -rhs
        T.append(row)
        beta.append(rhs)
        if scol is not None and row[scol] > 0:
            basis.append(scol)
        else:
            basis.append(ncols + i)  # artificial

    # crash: a column living in a single row can replace that row's artificial
    count = [0] * ncols
    for coefs, _, _ in sparse_rows:
        for col in coefs:
            count[col] += 1
    taken = set(basis)
    for i, row in enumerate(T):
        if basis[i] < ncols:
            continue
        for col in sorted(sparse_rows[i][0]):
            a = row[col]
            if count[col] != 1 or a <= 0 or col in taken:
                continue
            val = beta[i] / a
            if upper[col] is None or val <= upper[col]:
                T[i] = [x / a if x else x for x in row]
                beta[i] = val
                basis[i] = col
                taken.add(col)
                break

    solver = _Phase1(T, beta, basis, upper, ncols)
    if not solver.run():
        return False, None, solver.pivots
    t = solver.values()

    values = []
    for k in range(n):
        x = offset[k]
        for col, sign in cols_of[k]:
            x = x + t[col] if sign > 0 else x - t[col]
        values.append(x)
    for terms, sense, rhs in rows:
        if not _row_ok(sum((c * values[k] for c, k in terms), ZERO), sense, rhs):
            raise AssertionError("simplex witness violates a row")
    return True, values, solver.pivots


@dataclass
class _Phase1:
    T: list
    beta: list
    basis: list
    upper: list
    ncols: int
    pivots: int = 0
    at_upper: list = field(default_factory=list)

    def __post_init__(self):
        self.at_upper = [False] * self.ncols
        self.is_basic = [False] * self.ncols
        for b in self.basis:
            if b < self.ncols:
                self.is_basic[b] = True
        self.d = [ZERO] * self.ncols
        self.w = ZERO
        for i, b in enumerate(self.basis):
            if b >= self.ncols:
                self.w += self.beta[i]
                row = self.T[i]
                for k in range(self.ncols):
                    if row[k]:
                        self.d[k] -= row[k]

    def _entering(self):
        d, up, at_up, basic = self.d, self.upper, self.at_upper, self.is_basic
        for j in range(self.ncols):
            if basic[j]:
                continue
            if at_up[j]:
                if d[j] > 0:
                    return j, -1
            elif d[j] < 0 and (up[j] is None or up[j] > 0):
                return j, 1
        return None, 0

    def run(self) -> bool:
        while self.w > 0:
            j, delta = self._entering()
            if j is None:
                return False
            T, beta, basis, upper = self.T, self.beta, self.basis, self.upper
            theta = upper[j]
            leave = None
            leave_to_upper = False
            for i in range(len(T)):
                a = T[i][j]
                if not a:
                    continue
                rate = a if delta > 0 else -a
                b = basis[i]
                if rate > 0:
                    lim = beta[i] / rate
                    to_up = False
                else:
                    ub = upper[b] if b < self.ncols else None
                    if ub is None:
                        continue
                    lim = (ub - beta[i]) / -rate
                    to_up = True
                # ties: keep a bound flip, else Bland's smallest basic index
                if theta is None or lim < theta or (
                        lim == theta and leave is not None and b < basis[leave]):
                    theta, leave, leave_to_upper = lim, i, to_up
            if theta is None:
                raise AssertionError("phase-1 objective unbounded")
            step = theta if delta > 0 else -theta
            if step:
                for i in range(len(T)):
                    a = T[i][j]
                    if a:
                        beta[i] -= a * step
                self.w += self.d[j] * step
            if leave is None:
                self.at_upper[j] = not self.at_upper[j]
                continue
            start = upper[j] if self.at_upper[j] else ZERO
            self._pivot(leave, j, start + step, leave_to_upper)
        return True

    def _pivot(self, r, j, value, leave_to_upper):
        T = self.T
        out = self.basis[r]
        if out < self.ncols:
            self.is_basic[out] = False
            self.at_upper[out] = leave_to_upper
        self.basis[r] = j
        self.is_basic[j] = True
        self.at_upper[j] = False
        self.beta[r] = value
        self.pivots += 1

        prow = T[r]
        p = prow[j]
        if p != 1:
            inv = 1 / p
            prow = [a * inv if a else a for a in prow]
            T[r] = prow
        nz = [k for k in range(self.ncols) if prow[k]]
        for i in range(len(T)):
            if i == r:
                continue
            row = T[i]
            f = row[j]
            if f:
                for k in nz:
                    row[k] -= f * prow[k]
        f = self.d[j]
        if f:
            d = self.d
            for k in nz:
                d[k] -= f * prow[k]

    def values(self) -> list:
        t = [self.upper[k] if self.at_upper[k] else ZERO for k in range(self.ncols)]
        for i, b in enumerate(self.basis):
            if b < self.ncols:
                t[b] = self.beta[i]
        return t
