"""Abductive explanations: subset-minimal and cardinality-minimal cubes.

All functions take a system that already encodes the *negated* prediction
(see :func:`nnexplain.constraints.encode_goal_negation`); a sub-cube is an
explanation exactly when the oracle reports it entailed.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .constraints import (ConstraintSystem, Cube, PredictionGoal, build_cube,
                          encode_goal_negation, encode_network)
from .hitset import HitInstance, minimum_hitting_set
from .model import Instance, Network, predict
from .oracle import OracleAnswer, OracleConfig, Query, complete_point, entails
from .rational import to_json_number

SUBSET_MINIMAL = "subset_minimal"
CARDINALITY_MINIMAL = "cardinality_minimal"
UNVERIFIED = "unverified"

ORDERINGS = ("lex", "center_distance", "intensity", "custom")
# counterexamples kept for cheap refutation in the hitting set loop
RECYCLE = 32


class NotEntailedError(ValueError):
    """The starting cube does not entail the target prediction."""

    def __init__(self, msg, counterexample=None):
        super().__init__(msg)
        self.counterexample = counterexample


@dataclass
class Explanation:
    literals: Cube
    kind: str
    oracle_calls: int = 0
    wall_time: float = 0.0
    counterexample: Optional[dict] = None

    def __len__(self):
        return len(self.literals)

    def features(self, sys: ConstraintSystem) -> list:
        return sorted(sys.input_vars.index(v) for v in self.literals.vars)

    def to_json(self, sys: ConstraintSystem, instance_id=None, target_class=None,
                feature_names: Optional[Sequence[str]] = None) -> dict:
        feats = []
        for v, x in sorted(self.literals, key=lambda l: sys.input_vars.index(l[0])):
            i = sys.input_vars.index(v)
            name = feature_names[i] if feature_names else v
            feats.append({"index": i, "name": name, "value": to_json_number(x)})
        return {
            "instance_id": instance_id,
            "target_class": target_class if target_class is not None else sys.goal,
            "kind": self.kind,
            "features": feats,
            "size": len(self.literals),
            "oracle_calls": self.oracle_calls,
            "time_ms": round(self.wall_time * 1000, 3),
        }


@dataclass(frozen=True)
class Ordering:
    """Order in which literals are tried for removal."""

    perm: tuple
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(int(i) for i in self.perm))
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"not a permutation of 0..{len(self.perm) - 1}: {self.perm}")


class Counter:
    """Oracle wrapper that counts calls and keeps the last counterexample.

    With ``recycle`` > 0 the most recent counterexamples are kept; a query
    is first tried against each of them with the queried literals written
    over it, and the full oracle only runs if none of those points is an
    exact solution.
    """

    def __init__(self, system: ConstraintSystem, config: Optional[OracleConfig] = None,
                 oracle: Optional[Callable] = None, anchor: Optional[dict] = None, recycle: int = 0):
        self.system = system
        self.config = config
        self.oracle = oracle
        self.anchor = anchor
        self.calls = 0
        self.recycled = 0
        self.last = None
        self.pool: deque = deque(maxlen=recycle) if recycle else None

    def _from_pool(self, cube: Cube):
        lits = cube.as_dict()
        for old in reversed(self.pool):
            point = {v: lits.get(v, old[v]) for v in self.system.input_vars}
            mu = complete_point(self.system, point, cube)
            if mu is not None:
                return OracleAnswer(False, mu)
        return None

    def __call__(self, cube: Cube) -> bool:
        self.calls += 1
        ans = self._from_pool(cube) if self.pool else None
        if ans is not None:
            self.recycled += 1
        else:
            ans = (self.oracle or entails)(Query(self.system, cube), self.config, self.anchor)
        if self.pool is not None and not ans.entailed:
            self.pool.append({v: ans.counterexample[v] for v in self.system.input_vars})
        self.last = ans
        return ans.entailed


def _check_start(check: Counter, cube: Cube):
    if not check(cube):
        raise NotEntailedError("instance not classified as target", check.last.counterexample)


def _ordered(sys: ConstraintSystem, cube: Cube, order: Optional[Ordering]) -> list:
    lits = list(cube)
    if order is None:
        return sorted(lits, key=lambda l: sys.input_vars.index(l[0]))
    rank = {i: r for r, i in enumerate(order.perm)}
    return sorted(lits, key=lambda l: rank.get(sys.input_vars.index(l[0]), math.inf))


def subset_minimal(sys_neg: ConstraintSystem, cube: Cube, order: Optional[Ordering] = None,
                   config: Optional[OracleConfig] = None, check_start: bool = True) -> Explanation:
    """Deletion-based linear search: drop each literal whose removal keeps entailment.

    Makes exactly ``len(cube)`` oracle calls. With ``check_start`` one extra
    call first confirms that ``cube`` itself is entailed (not counted).
    """
    t0 = time.perf_counter()
    check = Counter(sys_neg, config)
    if check_start:
        _check_start(check, cube)
        check.calls = 0
    kept = dict(cube.literals)
    for var, _ in _ordered(sys_neg, cube, order):
        trial = {v: x for v, x in kept.items() if v != var}
        if check(Cube(tuple(trial.items()))):
            kept = trial
    result = Cube(tuple((v, x) for v, x in cube if v in kept))
    return Explanation(result, SUBSET_MINIMAL, check.calls, time.perf_counter() - t0)


def pick_false_lits(rest: Cube, mu: dict) -> list:
    """Variables of ``rest`` whose literal the assignment ``mu`` falsifies."""
    return [v for v, x in rest if mu[v] != x]


@dataclass
class HittingSetTrace:
    hitting_sets: list = field(default_factory=list)
    cores: list = field(default_factory=list)


def _walk(sys: ConstraintSystem, cube: Cube, mu: dict) -> dict:
    """Move ``mu`` towards the cube one input at a time, as long as the
    moved point stays an exact counterexample. No oracle calls."""
    point = {v: mu[v] for v in sys.input_vars}
    for v, x in cube:
        if point[v] == x:
            continue
        trial = dict(point)
        trial[v] = x
        done = complete_point(sys, trial)
        if done is not None:
            point, mu = trial, done
    return mu


def _grow(check: Counter, cube: Cube, mu: dict):
    """Extend the literals ``mu`` satisfies to a maximal non-entailing sub-cube.

    Returns a counterexample whose falsified literals form a minimal
    correction set of ``cube``.
    """
    sat = {v for v, x in cube if mu[v] == x}
    for v, _ in cube:
        if v in sat:
            continue
        if check(cube.restrict(sat | {v})):
            continue
        mu = check.last.counterexample
        sat |= {u for u, x in cube if mu[u] == x}
    return mu


CORE_MODES = ("raw", "walk", "grow")


def cardinality_minimal(sys_neg: ConstraintSystem, cube: Cube,
                        config: Optional[OracleConfig] = None, check_start: bool = True,
                        trace: Optional[HittingSetTrace] = None,
                        cores: str = "walk") -> Explanation:
    """Smallest entailing sub-cube via the implicit hitting set loop.

    ``cores`` controls how a counterexample is turned into a core:
    ``raw`` takes its falsified literals as they are, ``walk`` first moves
    it towards the instance while it stays a counterexample (free), and
    ``grow`` additionally uses oracle calls to make the core a minimal
    correction set. Smaller cores mean fewer hitting-set rounds.
    """
    if cores not in CORE_MODES:
        raise ValueError(f"cores must be one of {CORE_MODES}")
    t0 = time.perf_counter()
    # anchoring witnesses at the instance keeps the falsified cores small
    check = Counter(sys_neg, config, anchor=cube.as_dict(), recycle=RECYCLE)
    if check_start:
        _check_start(check, cube)
        check.calls = 0
    order = [v for v, _ in _ordered(sys_neg, cube, None)]
    values = cube.as_dict()
    gamma: list = []
    seen = set()
    while True:
        h = minimum_hitting_set(HitInstance(order, gamma))
        key = frozenset(h)
        if key in seen:
            raise AssertionError(f"hitting set {sorted(h)} repeated")
        seen.add(key)
        if trace is not None:
            trace.hitting_sets.append(list(h))
        hcube = Cube(tuple((v, values[v]) for v in h))
        if check(hcube):
            result = Cube(tuple((v, x) for v, x in cube if v in key))
            return Explanation(result, CARDINALITY_MINIMAL, check.calls, time.perf_counter() - t0)
        mu = check.last.counterexample
        if cores != "raw":
            mu = _walk(sys_neg, cube, mu)
        if cores == "grow":
            mu = _grow(check, cube, mu)
        rest = Cube(tuple((v, x) for v, x in cube if v not in key))
        core = pick_false_lits(rest, mu)
        if not core:
            raise AssertionError("counterexample satisfies the whole cube: the cube does not "
                                 "entail the prediction")
        if trace is not None:
            trace.cores.append(core)
        gamma.append(core)


def validate_and_shrink(sys_neg: ConstraintSystem, candidate: Cube, full_cube: Cube,
                        order: Optional[Ordering] = None,
                        config: Optional[OracleConfig] = None) -> Explanation:
    """Check an externally supplied explanation; shrink it to subset-minimal if valid.

    An invalid candidate comes back with kind ``unverified`` and the
    oracle's counterexample attached.
    """
    if not candidate.issubset(full_cube):
        raise ValueError("candidate is not a sub-cube of the instance")
    t0 = time.perf_counter()
    check = Counter(sys_neg, config)
    if not check(candidate):
        return Explanation(candidate, UNVERIFIED, check.calls, time.perf_counter() - t0,
                           counterexample=check.last.counterexample)
    exp = subset_minimal(sys_neg, candidate, order, config, check_start=False)
    exp.oracle_calls += check.calls
    exp.wall_time = time.perf_counter() - t0
    return exp


def enumerate_explanations(sys_neg: ConstraintSystem, cube: Cube, k: int,
                           order: Optional[Ordering] = None,
                           config: Optional[OracleConfig] = None) -> list:
    """Up to ``k`` distinct subset-minimal explanations (not necessarily all).

    Each rerun tries first to drop the literals of explanations found so far,
    first all of them together, then one explanation at a time.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    base = [sys_neg.input_vars.index(v) for v, _ in _ordered(sys_neg, cube, order)]
    first = subset_minimal(sys_neg, cube, order, config)
    found = [first]
    keys = {frozenset(first.literals.vars)}
    while len(found) < k:
        new = None
        groups = [set().union(*(e.literals.vars for e in found))] + [set(e.literals.vars) for e in found]
        for group in groups:
            idx = {sys_neg.input_vars.index(v) for v in group}
            front = [i for i in base if i in idx]
            perm = front + [i for i in base if i not in idx]
            perm += [i for i in range(len(sys_neg.input_vars)) if i not in set(perm)]
            exp = subset_minimal(sys_neg, cube, Ordering(perm, "custom"), config, check_start=False)
            if frozenset(exp.literals.vars) not in keys:
                new = exp
                break
        if new is None:
            break
        keys.add(frozenset(new.literals.vars))
        found.append(new)
    return found


def make_ordering(kind: str, instance=None, image_shape=None, perm=None) -> Ordering:
    """Removal order: ``lex``, ``center_distance`` (far pixels first),
    ``intensity`` (dark pixels first) or ``custom``."""
    kind = kind.replace("-", "_")
    if kind == "custom":
        if perm is None:
            raise ValueError("custom ordering needs a permutation")
        return Ordering(tuple(perm), "custom")
    values = None
    if instance is not None:
        values = instance.values if isinstance(instance, Instance) else tuple(instance)
    if kind == "lex":
        if values is None and image_shape is None:
            raise ValueError("lex ordering needs the instance or its size")
        n = len(values) if values is not None else image_shape[0] * image_shape[1]
        return Ordering(tuple(range(n)), "lex")
    if kind == "center_distance":
        if image_shape is None:
            raise ValueError("center_distance ordering needs an image shape")
        h, w = image_shape
        if values is not None and len(values) != h * w:
            raise ValueError(f"image shape {h}x{w} does not match {len(values)} features")
        cy, cx = (h - 1) / 2, (w - 1) / 2
        # squared distances are exact multiples of 1/4
        dist = [((r - cy) ** 2 + (c - cx) ** 2, r * w + c) for r in range(h) for c in range(w)]
        return Ordering(tuple(i for _, i in sorted(dist, key=lambda t: (-t[0], t[1]))), "center_distance")
    if kind == "intensity":
        if values is None:
            raise ValueError("intensity ordering needs the instance")
        return Ordering(tuple(sorted(range(len(values)), key=lambda i: (values[i], i))), "intensity")
    raise ValueError(f"unknown ordering {kind!r}")


# -- convenience front door --------------------------------------------------

@dataclass
class Problem:
    """A network, one instance and the target class, encoded once."""

    net: Network
    instance: Instance
    target: int
    system: ConstraintSystem
    cube: Cube

    @classmethod
    def build(cls, net: Network, instance, target: Optional[int] = None) -> "Problem":
        if not isinstance(instance, Instance):
            instance = Instance(tuple(instance))
        if target is None:
            target = predict(net, instance.values)
        plain = encode_network(net)
        # the full cube is consistent with the network constraints; checked only under asserts
        assert complete_point(plain, dict(zip(plain.input_vars, instance.values))) is not None
        sys_neg = encode_goal_negation(plain, PredictionGoal(target))
        return cls(net, instance, target, sys_neg, build_cube(sys_neg, instance))

    def cube_of(self, features) -> Cube:
        return build_cube(self.system, self.instance, features)
