import json
import random
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnexplain.constraints import Cube, PredictionGoal, build_cube, encode_goal_negation, toy_integer_system
from nnexplain.explain import (CARDINALITY_MINIMAL, SUBSET_MINIMAL, UNVERIFIED, HittingSetTrace,
                               NotEntailedError, Ordering, Problem, cardinality_minimal,
                               enumerate_explanations, make_ordering, pick_false_lits, subset_minimal,
                               validate_and_shrink)
from nnexplain.model import Instance, predict
from nnexplain.oracle import Query, entails
from netgen import random_net, random_point, smallest_entailing_size

TOY = encode_goal_negation(toy_integer_system(), PredictionGoal(0))
TOY_CUBE = build_cube(TOY, (3, 2))


def check(sys, cube):
    return entails(Query(sys, cube)).entailed


def minimal_explanations(sys, cube) -> set:
    """Every subset-minimal entailing sub-cube, by enumeration."""
    lits = cube.vars
    entailing = [frozenset(c) for k in range(len(lits) + 1) for c in combinations(lits, k)
                 if check(sys, cube.restrict(c))]
    return {s for s in entailing if not any(t < s for t in entailing)}


def test_toy_lex_order_keeps_i2():
    exp = subset_minimal(TOY, TOY_CUBE)
    assert exp.literals == Cube((("i2", 2),))
    assert exp.kind == SUBSET_MINIMAL and exp.oracle_calls == 2


def test_toy_reverse_order_keeps_i1():
    exp = subset_minimal(TOY, TOY_CUBE, Ordering((1, 0)))
    assert exp.literals == Cube((("i1", 3),))


def test_already_minimal_cube_returned_whole():
    cube = build_cube(TOY, (3, 2), [1])
    exp = subset_minimal(TOY, cube)
    assert exp.literals == cube and exp.oracle_calls == 1


def test_wrong_target_rejected():
    other = encode_goal_negation(toy_integer_system(), PredictionGoal(1))
    with pytest.raises(NotEntailedError, match="not classified as target"):
        subset_minimal(other, TOY_CUBE)
    with pytest.raises(NotEntailedError):
        cardinality_minimal(other, TOY_CUBE)


@pytest.mark.parametrize("cores", ["raw", "walk", "grow"])
def test_toy_cardinality_trace(cores):
    trace = HittingSetTrace()
    exp = cardinality_minimal(TOY, TOY_CUBE, trace=trace, cores=cores)
    assert exp.kind == CARDINALITY_MINIMAL and len(exp) == 1
    assert trace.hitting_sets[0] == []
    assert sorted(trace.cores[0]) == ["i1", "i2"]
    assert len(trace.hitting_sets) == 2 and len(trace.hitting_sets[1]) == 1


def test_cardinality_minimal_keeps_necessary_cube():
    cube = build_cube(TOY, (3, 2), [0])
    assert cardinality_minimal(TOY, cube).literals == cube


def test_unknown_core_mode_rejected():
    with pytest.raises(ValueError):
        cardinality_minimal(TOY, TOY_CUBE, cores="shrink")


def test_pick_false_lits():
    rest = Cube((("i1", 3), ("i2", 2)))
    assert pick_false_lits(rest, {"i1": 0, "i2": 0}) == ["i1", "i2"]
    assert pick_false_lits(rest, {"i1": 3, "i2": 0}) == ["i2"]
    assert pick_false_lits(Cube((("i1", 3),)), {"i1": -7}) == ["i1"]


def test_validate_full_cube_equals_subset_minimal():
    exp = validate_and_shrink(TOY, TOY_CUBE, TOY_CUBE)
    assert exp.literals == subset_minimal(TOY, TOY_CUBE).literals
    assert exp.kind == SUBSET_MINIMAL


def test_validate_empty_candidate_rejected():
    exp = validate_and_shrink(TOY, Cube(), TOY_CUBE)
    assert exp.kind == UNVERIFIED
    mu = exp.counterexample
    assert mu["o"] == 2 and mu["i1"] <= 0 and mu["i2"] <= 0


def test_validate_known_explanation_unchanged():
    known = Cube((("i1", 3),))
    assert validate_and_shrink(TOY, known, TOY_CUBE).literals == known


def test_validate_requires_sub_cube():
    with pytest.raises(ValueError, match="sub-cube"):
        validate_and_shrink(TOY, Cube((("i1", 4),)), TOY_CUBE)


def test_toy_enumeration_finds_both():
    found = enumerate_explanations(TOY, TOY_CUBE, 2)
    assert {e.literals for e in found} == {Cube((("i2", 2),)), Cube((("i1", 3),))}
    assert [e.literals for e in enumerate_explanations(TOY, TOY_CUBE, 1)] == \
           [subset_minimal(TOY, TOY_CUBE).literals]
    with pytest.raises(ValueError):
        enumerate_explanations(TOY, TOY_CUBE, 0)


def test_enumeration_on_unique_explanations():
    rng = random.Random(31)
    unique = 0
    for _ in range(40):
        net = random_net(rng, rng.randint(2, 5), 4, 2)
        p = Problem.build(net, random_point(rng, net))
        if not check(p.system, p.cube):
            continue
        truth = minimal_explanations(p.system, p.cube)
        found = enumerate_explanations(p.system, p.cube, 4)
        keys = [frozenset(e.literals.vars) for e in found]
        assert len(set(keys)) == len(keys)
        assert set(keys) <= truth
        if len(truth) == 1:
            unique += 1
            assert len(found) == 1
    assert unique


def test_orderings():
    assert make_ordering("lex", (0, 0, 0, 0)).perm == (0, 1, 2, 3)
    perm = make_ordering("center-distance", image_shape=(3, 3)).perm
    assert set(perm[:4]) == {0, 2, 6, 8}
    assert set(perm[4:8]) == {1, 3, 5, 7}
    assert perm[8] == 4
    assert make_ordering("intensity", ("0.9", "0.1", "0.5")).perm == (1, 2, 0)
    assert make_ordering("custom", perm=(2, 0, 1)).name == "custom"


def test_ordering_errors():
    with pytest.raises(ValueError, match="shape"):
        make_ordering("center_distance", (0, 0, 0, 0))
    with pytest.raises(ValueError, match="permutation"):
        Ordering((0, 0, 1))
    with pytest.raises(ValueError, match="does not match"):
        make_ordering("center_distance", (0,) * 5, image_shape=(2, 2))
    with pytest.raises(ValueError, match="unknown"):
        make_ordering("spiral", (0, 0))


def test_explanation_json():
    exp = subset_minimal(TOY, TOY_CUBE)
    d = exp.to_json(TOY, 7, "1", ["first", "second"])
    assert d["features"] == [{"index": 1, "name": "second", "value": 2}]
    assert (d["instance_id"], d["target_class"], d["kind"], d["size"], d["oracle_calls"]) == \
           (7, "1", SUBSET_MINIMAL, 1, 2)
    json.dumps(d)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_random_networks_explanations(seed):
    rng = random.Random(seed)
    net = random_net(rng, rng.randint(2, 6), rng.randint(2, 6), rng.randint(2, 3))
    p = Problem.build(net, random_point(rng, net))
    if not check(p.system, p.cube):
        return  # tied logits: nothing to explain
    perm = list(range(net.input_dim))
    rng.shuffle(perm)
    exp = subset_minimal(p.system, p.cube, Ordering(perm))
    assert exp.oracle_calls == len(p.cube)
    assert check(p.system, exp.literals)
    for v in exp.literals.vars:
        assert not check(p.system, exp.literals.without(v))
    trace = HittingSetTrace()
    best = cardinality_minimal(p.system, p.cube, trace=trace)
    assert check(p.system, best.literals)
    assert len(best) <= len(exp)
    assert smallest_entailing_size(lambda c: check(p.system, c), p.cube, len(best)) == len(best)
    seen = set()
    for h, core in zip(trace.hitting_sets, trace.cores):
        assert not set(h) & set(core)
        assert frozenset(h) not in seen
        seen.add(frozenset(h))


def test_core_modes_agree_on_size():
    rng = random.Random(44)
    for _ in range(8):
        net = random_net(rng, 5, 5, 2)
        p = Problem.build(net, random_point(rng, net))
        if not check(p.system, p.cube):
            continue
        sizes = {len(cardinality_minimal(p.system, p.cube, cores=m)) for m in ("raw", "walk", "grow")}
        assert len(sizes) == 1


def test_problem_defaults_to_prediction():
    net = random_net(random.Random(2), 3, 4, 3)
    x = random_point(random.Random(3), net)
    p = Problem.build(net, x)
    assert p.target == predict(net, x)
    assert p.cube_of([0, 2]).vars == ("x0", "x2")
    assert isinstance(p.instance, Instance)
