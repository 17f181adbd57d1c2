"""Constraint IR: typed variables, linear and indicator constraints.

A ReLU block ``y = max(Ax + b, 0)`` is encoded per neuron with a real pair
``y, s >= 0`` and a boolean ``z``::

    a_i . x + b_i = y_i - s_i
    z_i = 1  ->  y_i <= 0
    z_i = 0  ->  s_i <= 0

No big-M constants are introduced; indicator constraints are kept as such
and only become linear rows once their boolean is fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .model import Instance, Network
from .rational import ONE, Q, ZERO, is_integral, to_decimal_str, to_q

REAL, INTEGER, BOOLEAN = "real", "integer", "boolean"
KINDS = (REAL, INTEGER, BOOLEAN)
SENSES = ("<=", "=", ">=")

#: bounds given to integer variables declared without any
DEFAULT_INT_BOUND = 1000


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    name: str
    kind: str = REAL
    lo: Optional[Q] = None
    hi: Optional[Q] = None


@dataclass(frozen=True)
class LinConstraint:
    """``sum(coef * var) <sense> rhs`` with duplicate vars merged."""

    terms: tuple
    sense: str
    rhs: Q
    name: str = ""

    def __post_init__(self):
        if self.sense not in SENSES:
            raise EncodingError(f"unknown sense {self.sense!r}")
        merged: dict = {}
        for coef, var in self.terms:
            merged[var] = merged.get(var, ZERO) + to_q(coef)
        if not merged:
            raise EncodingError(f"constraint {self.name or '?'} has no terms")
        object.__setattr__(self, "terms", tuple((c, v) for v, c in merged.items()))
        object.__setattr__(self, "rhs", to_q(self.rhs))

    @property
    def vars(self):
        return tuple(v for _, v in self.terms)

    def activity(self, values) -> Q:
        return sum((c * values[v] for c, v in self.terms), ZERO)

    def holds(self, values) -> bool:
        act = self.activity(values)
        if self.sense == "<=":
            return act <= self.rhs
        if self.sense == ">=":
            return act >= self.rhs
        return act == self.rhs


@dataclass(frozen=True)
class IndicatorConstraint:
    var: str
    phase: int
    body: LinConstraint

    def __post_init__(self):
        if self.phase not in (0, 1):
            raise EncodingError(f"indicator phase must be 0 or 1, got {self.phase}")


@dataclass(frozen=True)
class ReluNeuron:
    """Bookkeeping for one encoded neuron; lets the oracle fix phases by sign."""

    layer: int
    index: int
    y: str
    s: str
    z: str
    pre_terms: tuple  # (coef, var) of the affine pre-activation
    pre_const: Q


@dataclass(frozen=True)
class PredictionGoal:
    target_class: int


@dataclass(frozen=True)
class Cube:
    """Conjunction of ``var = value`` literals over input variables."""

    literals: tuple = ()

    def __post_init__(self):
        lits = tuple((v, to_q(x)) for v, x in self.literals)
        seen = set()
        for v, _ in lits:
            if v in seen:
                raise EncodingError(f"variable {v} appears twice in cube")
            seen.add(v)
        object.__setattr__(self, "literals", lits)

    def __len__(self):
        return len(self.literals)

    def __iter__(self):
        return iter(self.literals)

    def __contains__(self, var):
        return any(v == var for v, _ in self.literals)

    @property
    def vars(self) -> tuple:
        return tuple(v for v, _ in self.literals)

    def as_dict(self) -> dict:
        return dict(self.literals)

    def without(self, var) -> "Cube":
        return Cube(tuple(l for l in self.literals if l[0] != var))

    def restrict(self, vars: Iterable) -> "Cube":
        keep = set(vars)
        return Cube(tuple(l for l in self.literals if l[0] in keep))

    def issubset(self, other: "Cube") -> bool:
        od = other.as_dict()
        return all(v in od and od[v] == x for v, x in self.literals)


@dataclass(frozen=True)
class ConstraintSystem:
    vars: tuple
    linear: tuple
    indicators: tuple
    input_vars: tuple
    output_vars: tuple
    relus: tuple = ()
    #: when set, the single output var holds the class *value* (integer models)
    class_values: Optional[tuple] = None
    goal: Optional[int] = None
    #: the network this system encodes, if any (lets callers re-evaluate witnesses)
    source: Any = field(default=None, repr=False, compare=False)
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for k, v in enumerate(self.vars):
            if v.name in index:
                raise EncodingError(f"duplicate variable {v.name}")
            index[v.name] = k
        object.__setattr__(self, "_index", index)
        for c in self.linear:
            self._check_refs(c)
        for ind in self.indicators:
            if self.var(ind.var).kind != BOOLEAN:
                raise EncodingError(f"indicator literal {ind.var} is not boolean")
            self._check_refs(ind.body)
        for name in self.input_vars + self.output_vars:
            self.var(name)
        if set(self.input_vars) & set(self.output_vars):
            raise EncodingError("input and output variables overlap")

    def _check_refs(self, c: LinConstraint):
        for v in c.vars:
            if v not in self._index:
                raise EncodingError(f"constraint {c.name or '?'} references undeclared {v}")

    def var(self, name) -> Var:
        try:
            return self.vars[self._index[name]]
        except KeyError:
            raise EncodingError(f"undeclared variable {name}") from None

    def position(self, name) -> int:
        return self._index[name]

    @property
    def booleans(self) -> tuple:
        return tuple(v.name for v in self.vars if v.kind == BOOLEAN)

    def to_builder(self) -> "SystemBuilder":
        b = SystemBuilder()
        b.vars = list(self.vars)
        b.linear = list(self.linear)
        b.indicators = list(self.indicators)
        b.input_vars = list(self.input_vars)
        b.output_vars = list(self.output_vars)
        b.relus = list(self.relus)
        b.class_values = self.class_values
        b.goal = self.goal
        b.source = self.source
        return b

    def violations(self, values: dict, cube: Optional[Cube] = None) -> list:
        """Reasons why ``values`` fails this system (and ``cube``); empty if none."""
        bad = []
        for v in self.vars:
            if v.name not in values:
                bad.append(f"{v.name} unassigned")
                continue
            x = values[v.name]
            if v.lo is not None and x < v.lo or v.hi is not None and x > v.hi:
                bad.append(f"{v.name}={x} outside bounds")
            if v.kind != REAL and not is_integral(to_q(x)):
                bad.append(f"{v.name}={x} not integral")
        if bad:
            return bad
        for c in self.linear:
            if not c.holds(values):
                bad.append(f"row {c.name} violated")
        for ind in self.indicators:
            if values[ind.var] == ind.phase and not ind.body.holds(values):
                bad.append(f"indicator {ind.body.name} ({ind.var}={ind.phase}) violated")
        if cube is not None:
            for v, x in cube:
                if values[v] != x:
                    bad.append(f"cube literal {v}={x} violated")
        return bad


class SystemBuilder:
    """Mutable staging area; ``build()`` freezes it into a ConstraintSystem."""

    def __init__(self):
        self.vars: list = []
        self.linear: list = []
        self.indicators: list = []
        self.input_vars: list = []
        self.output_vars: list = []
        self.relus: list = []
        self.class_values = None
        self.goal = None
        self.source = None
        self._names: set = set()

    def add_var(self, name, kind=REAL, lo=None, hi=None) -> str:
        if kind not in KINDS:
            raise EncodingError(f"unknown variable kind {kind!r}")
        if name in self._names or any(v.name == name for v in self.vars):
            raise EncodingError(f"duplicate variable {name}")
        if kind == BOOLEAN:
            lo, hi = ZERO, ONE
        elif kind == INTEGER:
            lo = -DEFAULT_INT_BOUND if lo is None else lo
            hi = DEFAULT_INT_BOUND if hi is None else hi
        lo = None if lo is None else to_q(lo)
        hi = None if hi is None else to_q(hi)
        if lo is not None and hi is not None and lo > hi:
            raise EncodingError(f"{name}: empty bounds [{lo}, {hi}]")
        self.vars.append(Var(name, kind, lo, hi))
        self._names.add(name)
        return name

    def add_linear(self, terms, sense, rhs, name=None) -> LinConstraint:
        c = LinConstraint(tuple(terms), sense, rhs, name or f"c{len(self.linear)}")
        self.linear.append(c)
        return c

    def add_indicator(self, var, phase, terms, sense, rhs, name=None) -> IndicatorConstraint:
        body = LinConstraint(tuple(terms), sense, rhs, name or f"ind{len(self.indicators)}")
        ind = IndicatorConstraint(var, phase, body)
        self.indicators.append(ind)
        return ind

    def build(self) -> ConstraintSystem:
        return ConstraintSystem(
            tuple(self.vars), tuple(self.linear), tuple(self.indicators),
            tuple(self.input_vars), tuple(self.output_vars), tuple(self.relus),
            self.class_values, self.goal, self.source,
        )


def encode_network(net: Network) -> ConstraintSystem:
    """Encode every layer of ``net``; inputs are bounded by its input domain."""
    b = SystemBuilder()
    prev = []
    for i, (lo, hi) in enumerate(net.input_domain):
        prev.append(b.add_var(f"x{i}", REAL, lo, hi))
    b.input_vars = list(prev)
    block = 0
    for layer in net.layers:
        if layer.activation == "relu":
            block += 1
            cur = []
            for i, (row, bias) in enumerate(zip(layer.weights, layer.bias)):
                y = b.add_var(f"y{block}_{i}", REAL, ZERO, None)
                s = b.add_var(f"s{block}_{i}", REAL, ZERO, None)
                z = b.add_var(f"z{block}_{i}", BOOLEAN)
                pre = tuple((w, v) for w, v in zip(row, prev) if w != 0)
                b.add_linear(pre + ((-ONE, y), (ONE, s)), "=", -bias, f"lin{block}_{i}")
                b.add_indicator(z, 1, [(ONE, y)], "<=", ZERO, f"on{block}_{i}")
                b.add_indicator(z, 0, [(ONE, s)], "<=", ZERO, f"off{block}_{i}")
                b.relus.append(ReluNeuron(block, i, y, s, z, pre, bias))
                cur.append(y)
            prev = cur
        else:
            cur = []
            for j, (row, bias) in enumerate(zip(layer.weights, layer.bias)):
                o = b.add_var(f"o{j}", REAL, None, None)
                pre = tuple((w, v) for w, v in zip(row, prev) if w != 0)
                b.add_linear(pre + ((-ONE, o),), "=", -bias, f"out{j}")
                cur.append(o)
            prev = cur
    b.output_vars = list(prev)
    b.source = net
    return b.build()


def encode_goal_negation(sys: ConstraintSystem, goal: PredictionGoal) -> ConstraintSystem:
    """Extend ``sys`` with "the prediction is not ``goal.target_class``".

    For logit outputs this is ``OR_{j != c} o_j >= o_c`` (a tie counts as a
    misclassification). For a single integer class-value output it is
    ``o <= v - 1 OR o >= v + 1``.
    """
    if sys.goal is not None:
        raise EncodingError("system already carries a negated goal")
    c = goal.target_class
    b = sys.to_builder()
    if sys.class_values is None:
        k = len(sys.output_vars)
        if k < 2:
            raise EncodingError("goal negation needs at least two classes")
        if not 0 <= c < k:
            raise EncodingError(f"target class {c} outside 0..{k - 1}")
        oc = sys.output_vars[c]
        ds = []
        for j, oj in enumerate(sys.output_vars):
            if j == c:
                continue
            d = b.add_var(f"d{j}", BOOLEAN)
            b.add_indicator(d, 1, [(ONE, oj), (-ONE, oc)], ">=", ZERO, f"beat{j}")
            ds.append(d)
    else:
        if len(sys.class_values) < 2:
            raise EncodingError("goal negation needs at least two classes")
        if not 0 <= c < len(sys.class_values):
            raise EncodingError(f"target class {c} outside 0..{len(sys.class_values) - 1}")
        (o,) = sys.output_vars
        if sys.var(o).kind == REAL:
            raise EncodingError("class-value output must be integer")
        v = to_q(sys.class_values[c])
        lo = b.add_var("d_lo", BOOLEAN)
        hi = b.add_var("d_hi", BOOLEAN)
        b.add_indicator(lo, 1, [(ONE, o)], "<=", v - 1, "below")
        b.add_indicator(hi, 1, [(ONE, o)], ">=", v + 1, "above")
        ds = [lo, hi]
    b.add_linear([(ONE, d) for d in ds], ">=", ONE, "misclassified")
    b.goal = c
    return b.build()


def build_cube(sys: ConstraintSystem, instance, keep: Optional[Iterable[int]] = None) -> Cube:
    """Literals ``x_i = value_i`` for each kept feature index (all by default)."""
    values = instance.values if isinstance(instance, Instance) else tuple(to_q(v) for v in instance)
    n = len(sys.input_vars)
    if len(values) != n:
        raise EncodingError(f"instance has {len(values)} values, system has {n} inputs")
    idx = range(n) if keep is None else sorted(set(keep))
    lits = []
    for i in idx:
        if not 0 <= i < n:
            raise EncodingError(f"feature index {i} outside 0..{n - 1}")
        var = sys.var(sys.input_vars[i])
        x = to_q(values[i])
        if var.lo is not None and x < var.lo or var.hi is not None and x > var.hi:
            raise EncodingError(f"value {x} of {var.name} outside its bounds")
        lits.append((var.name, x))
    return Cube(tuple(lits))


def feature_index(sys: ConstraintSystem, var: str) -> int:
    return sys.input_vars.index(var)


def toy_integer_system() -> ConstraintSystem:
    """The two-input integer model mapping (i1, i2) to class 1 or 2.

    z1 <-> i1 <= 0, z2 <-> i2 <= 0, z3 <-> z1 + z2 <= 1, z3 -> o = 1,
    not z3 -> o = 2. Over the integers, ``not (i <= 0)`` is ``i >= 1``.
    """
    b = SystemBuilder()
    i1 = b.add_var("i1", INTEGER)
    i2 = b.add_var("i2", INTEGER)
    z1, z2, z3 = (b.add_var(f"z{k}", BOOLEAN) for k in (1, 2, 3))
    o = b.add_var("o", INTEGER, 1, 2)
    for z, i in ((z1, i1), (z2, i2)):
        b.add_indicator(z, 1, [(1, i)], "<=", 0, f"{z}_on")
        b.add_indicator(z, 0, [(1, i)], ">=", 1, f"{z}_off")
    b.add_indicator(z3, 1, [(1, z1), (1, z2)], "<=", 1, "z3_on")
    b.add_indicator(z3, 0, [(1, z1), (1, z2)], ">=", 2, "z3_off")
    b.add_indicator(z3, 1, [(1, o)], "=", 1, "o_is_1")
    b.add_indicator(z3, 0, [(1, o)], "=", 2, "o_is_2")
    b.input_vars = [i1, i2]
    b.output_vars = [o]
    b.class_values = (1, 2)
    return b.build()


# -- LP text export --------------------------------------------------------

def _lp_terms(terms: Sequence) -> str:
    out = []
    for k, (c, v) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = to_decimal_str(abs(c))
        if k == 0:
            out.append(f"{'-' if c < 0 else ''}{mag} {v}")
        else:
            out.append(f"{sign} {mag} {v}")
    return " ".join(out)


def _lp_row(c: LinConstraint) -> str:
    return f"{_lp_terms(c.terms)} {c.sense} {to_decimal_str(c.rhs)}"


def format_lp(sys: ConstraintSystem, cube: Optional[Cube] = None) -> str:
    lines = ["\\ feasibility model: network constraints, negated goal, cube literals",
             "Minimize", f" obj: 0 {sys.vars[0].name}", "Subject To"]
    for c in sys.linear:
        lines.append(f" {c.name}: {_lp_row(c)}")
    for v, x in (cube or Cube()):
        lines.append(f" fix_{v}: 1 {v} = {to_decimal_str(x)}")
    for ind in sys.indicators:
        lines.append(f" {ind.body.name}: {ind.var} = {ind.phase} -> {_lp_row(ind.body)}")
    lines.append("Bounds")
    for v in sys.vars:
        if v.kind == BOOLEAN:
            continue
        if v.lo is None and v.hi is None:
            lines.append(f" {v.name} free")
        elif v.hi is None:
            lines.append(f" {v.name} >= {to_decimal_str(v.lo)}")
        elif v.lo is None:
            lines.append(f" -inf <= {v.name} <= {to_decimal_str(v.hi)}")
        else:
            lines.append(f" {to_decimal_str(v.lo)} <= {v.name} <= {to_decimal_str(v.hi)}")
    bins = [v.name for v in sys.vars if v.kind == BOOLEAN]
    ints = [v.name for v in sys.vars if v.kind == INTEGER]
    if bins:
        lines.append("Binaries")
        lines.extend(f" {n}" for n in bins)
    if ints:
        lines.append("Generals")
        lines.extend(f" {n}" for n in ints)
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(sys: ConstraintSystem, cube: Optional[Cube], path) -> None:
    Path(path).write_text(format_lp(sys, cube))
