import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnexplain.constraints import LinConstraint
from nnexplain.lp import LpProblem, feasible, solve_rows
from nnexplain.rational import to_q


def fm_feasible(nvars, rows) -> bool:
    """Fourier-Motzkin elimination over Fractions; rows are (coefs, rhs) meaning coefs.x <= rhs."""
    rows = [(tuple(Fraction(c) for c in a), Fraction(b)) for a, b in rows]
    left = set(range(nvars))
    while left:
        # cheapest variable first keeps the row count small
        k = min(left, key=lambda k: sum(r[0][k] > 0 for r in rows) * sum(r[0][k] < 0 for r in rows))
        left.discard(k)
        out = [r for r in rows if r[0][k] == 0]
        for ap, bp in (r for r in rows if r[0][k] > 0):
            for an, bn in (r for r in rows if r[0][k] < 0):
                lp, ln = ap[k], -an[k]
                out.append((tuple(ap[i] * ln + an[i] * lp for i in range(nvars)), bp * ln + bn * lp))
        # scale to unit max-coefficient; of parallel rows only the tightest matters
        tight: dict = {}
        for a, b in out:
            g = max(abs(x) for x in a)
            if g == 0:
                if b < 0:
                    return False
                continue
            a, b = tuple(x / g for x in a), b / g
            if a not in tight or b < tight[a]:
                tight[a] = b
        rows = list(tight.items())
    return True


def _as_le(nvars, names, bounds, cons):
    rows = []
    for k, (lo, hi) in enumerate(bounds):
        e = [0] * nvars
        e[k] = 1
        if hi is not None:
            rows.append((tuple(e), hi))
        if lo is not None:
            rows.append((tuple(-x for x in e), -lo))
    for c in cons:
        a = [0] * nvars
        for coef, v in c.terms:
            a[names.index(v)] += coef
        if c.sense in ("<=", "="):
            rows.append((tuple(a), c.rhs))
        if c.sense in (">=", "="):
            rows.append((tuple(-x for x in a), -c.rhs))
    return rows


def test_contradictory_bounds_row():
    p = LpProblem({"x": (None, None)}, [LinConstraint(((1, "x"),), ">=", 1),
                                        LinConstraint(((1, "x"),), "<=", 0)])
    assert feasible(p).status == "infeasible"


def test_simplex_point_on_segment():
    p = LpProblem({"x": (0, None), "y": (0, None)}, [LinConstraint(((1, "x"), (1, "y")), "=", 1)])
    v = feasible(p)
    assert v.feasible and v.witness["x"] + v.witness["y"] == 1
    assert v.witness["x"] >= 0 and v.witness["y"] >= 0


def test_degenerate_rows():
    # zero-coefficient rows: 0 <= 0 holds, 0 <= -1 does not
    ok, _, _ = solve_rows([to_q(0)], [to_q(1)], [(((to_q(0), 0),), "<=", to_q(0))])
    assert ok
    ok, _, _ = solve_rows([to_q(0)], [to_q(1)], [(((to_q(0), 0),), "<=", to_q(-1))])
    assert not ok


def test_fixed_and_free_columns():
    p = LpProblem({"a": (2, 2), "b": (None, None), "c": (None, 5)},
                  [LinConstraint(((1, "a"), (1, "b"), (1, "c")), "=", -7),
                   LinConstraint(((1, "b"),), ">=", -20)])
    v = feasible(p)
    assert v.feasible and v.witness["a"] == 2


def test_undeclared_variable_reported():
    with pytest.raises(KeyError, match="undeclared"):
        feasible(LpProblem({"x": (0, 1)}, [LinConstraint(((1, "y"),), "<=", 0, "r")]))


def test_deterministic_witness():
    p = LpProblem({"x": (0, 3), "y": (-1, 4)}, [LinConstraint(((1, "x"), (-2, "y")), ">=", "1/3")])
    assert feasible(p) == feasible(p)


def test_anchor_keeps_value_when_possible():
    lo, hi = [to_q(0), to_q(0)], [to_q(10), to_q(10)]
    rows = [(((to_q(1), 0), (to_q(1), 1)), ">=", to_q(4))]
    ok, vals, _ = solve_rows(lo, hi, rows, anchor=[to_q(7), to_q(3)])
    assert ok and vals == [7, 3]


def _random_system(rng, nvars=10, nrows=6):
    names = [f"v{k}" for k in range(nvars)]
    bounds = []
    for _ in range(nvars):
        lo = Fraction(rng.randint(-5, 2))
        bounds.append((lo, lo + rng.randint(0, 6)))
    cons = []
    for _ in range(nrows):
        idx = rng.sample(range(nvars), min(3, nvars))
        terms = tuple((Fraction(rng.randint(-4, 4), rng.randint(1, 3)), names[i]) for i in idx)
        if all(c == 0 for c, _ in terms):
            continue
        cons.append(LinConstraint(terms, rng.choice(["<=", ">=", "="]), Fraction(rng.randint(-8, 8), 2)))
    return names, bounds, cons


def test_agrees_with_fourier_motzkin():
    rng = random.Random(11)
    verdicts = set()
    for _ in range(60):
        names, bounds, cons = _random_system(rng, nvars=10, nrows=5)
        v = feasible(LpProblem(dict(zip(names, bounds)), cons))
        assert v.feasible == fm_feasible(len(names), _as_le(len(names), names, bounds, cons))
        verdicts.add(v.feasible)
    assert verdicts == {True, False}


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_witness_satisfies_rows_exactly(seed):
    rng = random.Random(seed)
    names, bounds, cons = _random_system(rng, nvars=rng.randint(1, 8), nrows=rng.randint(1, 8))
    v = feasible(LpProblem(dict(zip(names, bounds)), cons))
    if v.feasible:
        for c in cons:
            assert c.holds(v.witness)
        for n, (lo, hi) in zip(names, bounds):
            assert lo <= v.witness[n] <= hi
