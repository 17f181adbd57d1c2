"""Complete entailment oracle: does ``cube AND system`` have no solution?

``system`` is expected to carry the negated prediction already, so an
infeasible query means the cube entails the prediction. ``entails`` runs a
depth-first branch-and-bound over the booleans with interval propagation at
every node and exact LP checks; ``reference_entails`` enumerates every
boolean pattern and exists only to cross-check the former.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from .constraints import BOOLEAN, INTEGER, REAL, ConstraintSystem, Cube
from .lp import solve_rows
from .rational import ONE, ZERO, ceil_q, floor_q, is_integral, to_q

#: reference_entails refuses systems with more booleans than this
REFERENCE_MAX_BOOLEANS = 18


class OracleTimeout(Exception):
    pass


@dataclass(frozen=True)
class Query:
    system: ConstraintSystem
    cube: Cube

    def __post_init__(self):
        inputs = set(self.system.input_vars)
        for v in self.cube.vars:
            if v not in inputs:
                raise ValueError(f"cube variable {v} is not an input of the system")


@dataclass(frozen=True)
class OracleAnswer:
    entailed: bool
    counterexample: Optional[dict] = None
    nodes: int = 0
    lp_calls: int = 0


@dataclass
class OracleConfig:
    #: solve the LP relaxation at inner nodes too (prunes, and may find a witness early)
    node_lp: bool = True
    #: time.monotonic() value after which OracleTimeout is raised
    deadline: Optional[float] = None
    max_passes: int = 12


class BoundsMap:
    """Per-variable closed interval; ``None`` stands for an infinite end."""

    def __init__(self, system: ConstraintSystem, lo: list, hi: list, infeasible: bool = False):
        self.system = system
        self.lo = lo
        self.hi = hi
        self.infeasible = infeasible

    def __getitem__(self, name):
        k = self.system.position(name)
        return self.lo[k], self.hi[k]

    def fixed(self, name):
        lo, hi = self[name]
        return lo if lo is not None and lo == hi else None

    def as_dict(self) -> dict:
        return {v.name: (self.lo[k], self.hi[k]) for k, v in enumerate(self.system.vars)}


# -- compiled view of a system ---------------------------------------------

class _Compiled:
    def __init__(self, sys: ConstraintSystem):
        pos = sys.position
        self.n = len(sys.vars)
        self.kinds = [v.kind for v in sys.vars]
        self.lo = [v.lo for v in sys.vars]
        self.hi = [v.hi for v in sys.vars]
        self.linear = [self._row(c, pos) for c in sys.linear]
        self.bools = [k for k, v in enumerate(sys.vars) if v.kind == BOOLEAN]
        self.ints = [k for k, v in enumerate(sys.vars) if v.kind != REAL]
        self.bodies = {k: ([], []) for k in self.bools}
        for ind in sys.indicators:
            self.bodies[pos(ind.var)][ind.phase].append(self._row(ind.body, pos))
        self.relus = [
            (pos(r.y), pos(r.s), pos(r.z), tuple((c, pos(v)) for c, v in r.pre_terms), r.pre_const)
            for r in sys.relus
        ]
        self.relu_of_z = {z: i for i, (_, _, z, _, _) in enumerate(self.relus)}
        # flat row table for the propagation worklist; guard = (bool, phase) for bodies
        self.rows = list(self.linear)
        self.guard = [None] * len(self.rows)
        self.body_ids = {k: ([], []) for k in self.bools}
        for k in self.bools:
            for ph in (0, 1):
                for row in self.bodies[k][ph]:
                    self.body_ids[k][ph].append(len(self.rows))
                    self.rows.append(row)
                    self.guard.append((k, ph))
        self.var_rows = [[] for _ in range(self.n)]
        for r, (terms, _, _) in enumerate(self.rows):
            for _, k in terms:
                self.var_rows[k].append(r)
        used = set()
        for terms, _, _ in self.linear:
            used.update(k for _, k in terms)
        for k in self.bools:
            for rows in self.bodies[k]:
                for terms, _, _ in rows:
                    used.update(j for _, j in terms)
        # booleans that only ever appear as indicator literals
        self.free_literals = [k for k in self.bools if k not in used]

    @staticmethod
    def _row(c, pos):
        return tuple((coef, pos(v)) for coef, v in c.terms if coef), c.sense, c.rhs


def _compiled(sys: ConstraintSystem) -> _Compiled:
    comp = sys._cache.get("oracle")
    if comp is None:
        comp = sys._cache["oracle"] = _Compiled(sys)
    return comp


def _initial_bounds(comp: _Compiled, sys: ConstraintSystem, cube: Cube):
    lo, hi = list(comp.lo), list(comp.hi)
    for v, x in cube:
        k = sys.position(v)
        if (lo[k] is not None and x < lo[k]) or (hi[k] is not None and x > hi[k]):
            return lo, hi, False
        lo[k] = hi[k] = x
    return lo, hi, True


# -- interval propagation --------------------------------------------------

def _interval(terms, const, lo, hi):
    """Interval of ``sum(c * x) + const``; None ends mean unbounded."""
    a = b = const
    for c, k in terms:
        if c > 0:
            l, h = lo[k], hi[k]
        else:
            l, h = hi[k], lo[k]
        if a is not None:
            a = None if l is None else a + c * l
        if b is not None:
            b = None if h is None else b + c * h
        if a is None and b is None:
            break
    return a, b


class _Propagator:
    def __init__(self, comp: _Compiled, lo: list, hi: list, max_passes: int):
        self.c = comp
        self.lo = lo
        self.hi = hi
        self.max_passes = max_passes
        self.touched: list = []

    # Derived real bounds are rounded outward to this grid, and tightenings
    # smaller than a 1/2**SKIP fraction of the width are ignored. Both only
    # weaken pruning; the LPs still see every row exactly.
    GRID = 2**32
    SKIP = 10

    def set_lo(self, k, x) -> bool:
        old = self.lo[k]
        if self.c.kinds[k] != REAL:
            x = ceil_q(x)
        else:
            if x.denominator > self.GRID:
                x = floor_q(x * self.GRID) / self.GRID
            h = self.hi[k]
            if old is not None and h is not None and x < h and (x - old) * 2**self.SKIP < h - old:
                return False
        if old is None or x > old:
            self.lo[k] = x
            self.touched.append(k)
            return True
        return False

    def set_hi(self, k, x) -> bool:
        old = self.hi[k]
        if self.c.kinds[k] != REAL:
            x = floor_q(x)
        else:
            if x.denominator > self.GRID:
                x = ceil_q(x * self.GRID) / self.GRID
            l = self.lo[k]
            if old is not None and l is not None and x > l and (old - x) * 2**self.SKIP < old - l:
                return False
        if old is None or x < old:
            self.hi[k] = x
            self.touched.append(k)
            return True
        return False

    def empty(self, k) -> bool:
        return self.lo[k] is not None and self.hi[k] is not None and self.lo[k] > self.hi[k]

    def _tighten_le(self, terms, rhs, sign):
        """One pass of ``sign * sum(c x) <= sign * rhs``; returns (ok, changed)."""
        lo, hi = self.lo, self.hi
        finite = ZERO
        inf_at = -1
        n_inf = 0
        for c, k in terms:
            if (c > 0) == (sign > 0):
                b = lo[k]
            else:
                b = hi[k]
            if b is None:
                n_inf += 1
                if n_inf > 1:
                    return True, False
                inf_at = k
            else:
                finite += c * b
        if sign < 0:
            finite = -finite
        r = rhs * sign
        slack = r - finite
        if n_inf == 0:
            if slack < 0:
                return False, False
            changed = False
            for c, k in terms:
                l, h = lo[k], hi[k]
                if l is not None and l == h:
                    continue
                c = c * sign
                # a bound moves only if the term's range exceeds the slack
                if c > 0:
                    if h is None or c * (h - l) > slack:
                        changed |= self.set_hi(k, l + slack / c)
                elif l is None or -c * (h - l) > slack:
                    changed |= self.set_lo(k, h + slack / c)
                if self.empty(k):
                    return False, changed
            return True, changed
        for c, k in terms:
            if k != inf_at:
                continue
            c = c * sign
            changed = self.set_hi(k, slack / c) if c > 0 else self.set_lo(k, slack / c)
            return not self.empty(k), changed
        return True, False

    def row(self, row):
        terms, sense, rhs = row
        ok, ch1 = True, False
        if sense in ("<=", "="):
            ok, ch1 = self._tighten_le(terms, rhs, ONE)
        if ok and sense in (">=", "="):
            ok, ch2 = self._tighten_le(terms, rhs, -ONE)
            ch1 |= ch2
        return ok, ch1

    def phase_of(self, k):
        if self.lo[k] == self.hi[k] and self.lo[k] is not None:
            return int(self.lo[k])
        return None

    def fix(self, k, phase) -> bool:
        if not self.lo[k] <= phase <= self.hi[k]:
            return False
        self.lo[k] = self.hi[k] = ONE if phase else ZERO
        self.touched.append(k)
        return True

    def body_refuted(self, row) -> bool:
        terms, sense, rhs = row
        a, b = _interval(terms, ZERO, self.lo, self.hi)
        if sense in ("<=", "=") and a is not None and a > rhs:
            return True
        if sense in (">=", "=") and b is not None and b < rhs:
            return True
        return False

    def relu_pass(self) -> tuple:
        """Bound y/s by the pre-activation range and fix sign-determined phases."""
        changed = False
        lo, hi = self.lo, self.hi
        for y, s, z, terms, const in self.c.relus:
            L, U = _interval(terms, const, lo, hi)
            if U is not None:
                changed |= self.set_hi(y, max(U, ZERO))
            if L is not None:
                changed |= self.set_hi(s, max(-L, ZERO))
            if self.empty(y) or self.empty(s):
                return False, changed
            if self.phase_of(z) is None:
                if U is not None and U <= 0:
                    changed = True
                    if not self.fix(z, 1):
                        return False, changed
                elif L is not None and L >= 0:
                    changed = True
                    if not self.fix(z, 0):
                        return False, changed
        return True, changed

    def _active(self, r) -> bool:
        g = self.c.guard[r]
        if g is None:
            return True
        k, ph = g
        return self.lo[k] == self.hi[k] == ph

    def run(self) -> bool:
        """Propagate to a (capped) fixpoint; False means the node is infeasible."""
        c = self.c
        queue = deque(range(len(c.rows)))
        queued = [True] * len(c.rows)
        budget = 8 * len(c.rows) + 8
        for _ in range(self.max_passes):
            ok, changed = self.relu_pass()
            if not ok:
                return False
            while queue and budget > 0:
                r = queue.popleft()
                queued[r] = False
                if not self._active(r):
                    continue
                budget -= 1
                ok, ch = self.row(c.rows[r])
                if not ok:
                    return False
                if ch:
                    changed = True
            for k in c.bools:
                if self.lo[k] != self.hi[k]:
                    dead0 = any(self.body_refuted(row) for row in c.bodies[k][0])
                    dead1 = any(self.body_refuted(row) for row in c.bodies[k][1])
                    if dead0 and dead1:
                        return False
                    if dead0 or dead1:
                        changed = True
                        if not self.fix(k, 1 if dead0 else 0):
                            return False
            if self.touched:
                for k in self.touched:
                    for r in c.var_rows[k]:
                        if not queued[r]:
                            queued[r] = True
                            queue.append(r)
                    for ph in (0, 1):
                        if k in c.body_ids:
                            for r in c.body_ids[k][ph]:
                                if not queued[r]:
                                    queued[r] = True
                                    queue.append(r)
                self.touched = []
            if not changed and not queue:
                break
        return True


def propagate_bounds(q: Query, max_passes: int = 12) -> BoundsMap:
    sys = q.system
    comp = _compiled(sys)
    lo, hi, ok = _initial_bounds(comp, sys, q.cube)
    if ok:
        ok = _Propagator(comp, lo, hi, max_passes).run()
    return BoundsMap(sys, lo, hi, infeasible=not ok)


# -- search ----------------------------------------------------------------

def _active_rows(comp: _Compiled, lo, hi) -> list:
    rows = list(comp.linear)
    for k in comp.bools:
        if lo[k] == hi[k]:
            rows.extend(comp.bodies[k][int(lo[k])])
    return rows


def _holds(row, values) -> bool:
    terms, sense, rhs = row
    act = sum((c * values[k] for c, k in terms), ZERO)
    if sense == "<=":
        return act <= rhs
    if sense == ">=":
        return act >= rhs
    return act == rhs


def _repair(comp: _Compiled, lo, hi, values):
    """Turn an LP point into a full solution by choosing open phases, if possible."""
    vals = list(values)
    free = set(comp.free_literals)
    for k in comp.bools:
        if lo[k] == hi[k]:
            continue
        if k in free:
            for ph in (1, 0):
                if all(_holds(r, vals) for r in comp.bodies[k][ph]):
                    vals[k] = ONE if ph else ZERO
                    break
            else:
                return None
        elif not (vals[k] in (ZERO, ONE) and all(_holds(r, vals) for r in comp.bodies[k][int(vals[k])])):
            return None
    for k in comp.ints:
        if not is_integral(vals[k]):
            return None
    return vals


def _branch_var(comp: _Compiled, lo, hi):
    best = None
    for y, s, z, terms, const in comp.relus:
        if lo[z] == hi[z]:
            continue
        L, U = _interval(terms, const, lo, hi)
        if L is None or U is None:
            width = None
        else:
            width = U - L
        key = (width is None, width if width is not None else ZERO)
        if best is None or key < best[0]:
            best = (key, z)
    if best is not None:
        return best[1]
    for k in comp.bools:
        if lo[k] != hi[k]:
            return k
    return None


def _witness(sys: ConstraintSystem, values) -> dict:
    return {v.name: values[k] for k, v in enumerate(sys.vars)}


def entails(q: Query, config: Optional[OracleConfig] = None,
            anchor: Optional[dict] = None) -> OracleAnswer:
    """Decide ``q.cube AND q.system`` infeasible (entailed) or return a witness.

    ``anchor`` maps variables to preferred witness values; the LPs start
    from them, which keeps counterexamples close to e.g. the explained
    instance. It never changes the verdict.
    """
    cfg = config or OracleConfig()
    sys = q.system
    comp = _compiled(sys)
    lo, hi, ok = _initial_bounds(comp, sys, q.cube)
    if not ok:
        return OracleAnswer(True)
    anchor_vec = None
    if anchor:
        anchor_vec = [None] * comp.n
        for v, x in anchor.items():
            anchor_vec[sys.position(v)] = x
    stack = [(lo, hi)]
    nodes = lps = 0
    while stack:
        if cfg.deadline is not None and time.monotonic() > cfg.deadline:
            raise OracleTimeout("oracle deadline exceeded")
        lo, hi = stack.pop()
        nodes += 1
        if not _Propagator(comp, lo, hi, cfg.max_passes).run():
            continue
        open_bool = _branch_var(comp, lo, hi)
        if cfg.node_lp or open_bool is None:
            lps += 1
            feas, values, _ = solve_rows(lo, hi, _active_rows(comp, lo, hi), anchor_vec)
            if not feas:
                continue
            if open_bool is None:
                frac = next((k for k in comp.ints if not is_integral(values[k])), None)
                if frac is None:
                    mu = _witness(sys, values)
                    _assert_witness(sys, q.cube, mu)
                    return OracleAnswer(False, mu, nodes, lps)
                down_hi = list(hi)
                down_hi[frac] = floor_q(values[frac])
                up_lo = list(lo)
                up_lo[frac] = ceil_q(values[frac])
                stack.append((up_lo, list(hi)))
                stack.append((list(lo), down_hi))
                continue
            fixed = _repair(comp, lo, hi, values)
            if fixed is not None:
                mu = _witness(sys, fixed)
                if not sys.violations(mu, q.cube):
                    return OracleAnswer(False, mu, nodes, lps)
        # z = 1 (neuron off) is explored first: pushed last
        for phase in (0, 1):
            clo, chi = list(lo), list(hi)
            clo[open_bool] = chi[open_bool] = ONE if phase else ZERO
            stack.append((clo, chi))
    return OracleAnswer(True, None, nodes, lps)


def complete_point(sys: ConstraintSystem, inputs: dict, cube: Optional[Cube] = None) -> Optional[dict]:
    """Extend an input assignment to a full solution of ``sys``, or None.

    Neuron values follow from the inputs, single-unknown equalities are
    solved, and each remaining literal takes a phase whose rows hold. The
    result is checked exactly, so a returned point is always a solution.
    """
    comp = _compiled(sys)
    vals = [None] * comp.n
    for v, x in inputs.items():
        vals[sys.position(v)] = to_q(x)
    for y, s, z, terms, const in comp.relus:
        if any(vals[k] is None for _, k in terms):
            return None
        pre = sum((c * vals[k] for c, k in terms), const)
        vals[y] = pre if pre > 0 else ZERO
        vals[s] = -pre if pre < 0 else ZERO
        vals[z] = ZERO if pre > 0 else ONE
    progress = True
    while progress:
        progress = False
        for terms, sense, rhs in comp.linear:
            if sense != "=":
                continue
            open_ = [(c, k) for c, k in terms if vals[k] is None]
            if len(open_) == 1:
                c, k = open_[0]
                vals[k] = (rhs - sum((a * vals[j] for a, j in terms if j != k), ZERO)) / c
                progress = True
    for k in comp.bools:
        if vals[k] is not None:
            continue
        for ph in (1, 0):
            rows = comp.bodies[k][ph]
            if all(vals[j] is not None for r in rows for _, j in r[0]) and all(_holds(r, vals) for r in rows):
                vals[k] = ONE if ph else ZERO
                break
        else:
            return None
    if any(x is None for x in vals):
        return None
    mu = _witness(sys, vals)
    return None if sys.violations(mu, cube) else mu


def _assert_witness(sys, cube, mu):
    bad = sys.violations(mu, cube)
    if bad:
        raise AssertionError(f"oracle produced an invalid witness: {bad[:3]}")


def reference_entails(q: Query, config: Optional[OracleConfig] = None,
                      anchor: Optional[dict] = None) -> OracleAnswer:
    """Exhaustive check: one LP per boolean phase pattern, no propagation.

    ``config`` and ``anchor`` are accepted so it can stand in for
    :func:`entails`; they are ignored.
    """
    sys = q.system
    comp = _compiled(sys)
    if len(comp.bools) > REFERENCE_MAX_BOOLEANS:
        raise ValueError(f"{len(comp.bools)} booleans exceed the reference limit "
                         f"of {REFERENCE_MAX_BOOLEANS}")
    lo0, hi0, ok = _initial_bounds(comp, sys, q.cube)
    if not ok:
        return OracleAnswer(True)
    lps = 0
    for pattern in product((0, 1), repeat=len(comp.bools)):
        lo, hi = list(lo0), list(hi0)
        rows = list(comp.linear)
        for k, ph in zip(comp.bools, pattern):
            lo[k] = hi[k] = ONE if ph else ZERO
            rows.extend(comp.bodies[k][ph])
        found, n = _integer_lp(comp, lo, hi, rows)
        lps += n
        if found is not None:
            mu = _witness(sys, found)
            _assert_witness(sys, q.cube, mu)
            return OracleAnswer(False, mu, 0, lps)
    return OracleAnswer(True, None, 0, lps)


def _integer_lp(comp, lo, hi, rows):
    stack = [(lo, hi)]
    calls = 0
    while stack:
        lo, hi = stack.pop()
        calls += 1
        feas, values, _ = solve_rows(lo, hi, rows)
        if not feas:
            continue
        frac = next((k for k in comp.ints if not is_integral(values[k])), None)
        if frac is None:
            return values, calls
        down_hi = list(hi)
        down_hi[frac] = floor_q(values[frac])
        up_lo = list(lo)
        up_lo[frac] = ceil_q(values[frac])
        stack.append((up_lo, list(hi)))
        stack.append((list(lo), down_hi))
    return None, calls
