import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnexplain.constraints import (BOOLEAN, INTEGER, REAL, Cube, EncodingError, LinConstraint,
                                   PredictionGoal, SystemBuilder, build_cube, encode_goal_negation,
                                   encode_network, export_lp, format_lp, toy_integer_system)
from nnexplain.model import Instance, LayerParams, Network, forward
from nnexplain.oracle import Query, entails, propagate_bounds
from nnexplain.rational import to_q
from netgen import random_net, random_point

BLOCK = Network((LayerParams([[2, -1], [1, 1]], [-1, 1], "relu"),
                 LayerParams([[1, 0], [0, 1]], [0, 0], "identity")),
                2, ("a", "b"), ((-1, 1), (-1, 1)))


def test_block_encoding_has_two_equalities_and_four_indicators():
    sys = encode_network(BLOCK)
    lin = {c.name: c for c in sys.linear}
    assert lin["lin1_0"].terms == ((2, "x0"), (-1, "x1"), (-1, "y1_0"), (1, "s1_0"))
    assert lin["lin1_0"].rhs == 1
    assert lin["lin1_1"].terms == ((1, "x0"), (1, "x1"), (-1, "y1_1"), (1, "s1_1"))
    assert lin["lin1_1"].rhs == -1
    ind = {(i.var, i.phase): (i.body.terms, i.body.sense, i.body.rhs) for i in sys.indicators}
    assert ind == {
        ("z1_0", 1): (((1, "y1_0"),), "<=", 0), ("z1_0", 0): (((1, "s1_0"),), "<=", 0),
        ("z1_1", 1): (((1, "y1_1"),), "<=", 0), ("z1_1", 0): (((1, "s1_1"),), "<=", 0),
    }
    for name in ("y1_0", "s1_0", "y1_1", "s1_1"):
        assert sys.var(name).lo == 0 and sys.var(name).hi is None
    assert sys.var("x0").lo == -1 and sys.var("x0").hi == 1


def test_single_neuron_block():
    net = Network((LayerParams([[1]], [0], "relu"), LayerParams([[1], [-1]], [0, 0], "identity")),
                  1, ("p", "n"), ((-1, 1),))
    sys = encode_network(net)
    assert [c.name for c in sys.linear if c.name.startswith("lin")] == ["lin1_0"]
    assert sys.booleans == ("z1_0",)


@pytest.mark.parametrize("hidden", [[3], [2, 4], [5, 1, 2]])
def test_variable_counts(hidden):
    net = random_net(random.Random(0), 3, hidden, 3)
    sys = encode_network(net)
    assert len(sys.vars) == 3 + 3 * sum(hidden) + 3
    assert sum(v.kind == BOOLEAN for v in sys.vars) == sum(hidden)
    assert len(sys.indicators) == 2 * sum(hidden)
    assert sys.input_vars == ("x0", "x1", "x2") and sys.output_vars == ("o0", "o1", "o2")


def test_final_relu_layer_outputs_are_neurons():
    net = Network((LayerParams([[1, 1], [1, -1]], [0, 0], "relu"),), 2, ("a", "b"), ((0, 1), (0, 1)))
    sys = encode_network(net)
    assert sys.output_vars == ("y1_0", "y1_1")


def test_goal_negation_two_classes():
    sys = encode_goal_negation(encode_network(BLOCK), PredictionGoal(1))
    assert [v.name for v in sys.vars if v.name.startswith("d")] == ["d0"]
    (beat,) = [i for i in sys.indicators if i.var == "d0"]
    assert beat.phase == 1 and beat.body.sense == ">=" and beat.body.rhs == 0
    assert dict((v, c) for c, v in beat.body.terms) == {"o0": 1, "o1": -1}
    mis = [c for c in sys.linear if c.name == "misclassified"][0]
    assert mis.terms == ((1, "d0"),) and mis.sense == ">=" and mis.rhs == 1


def test_goal_negation_three_classes():
    net = random_net(random.Random(2), 2, 3, 3)
    sys = encode_goal_negation(encode_network(net), PredictionGoal(0))
    mis = [c for c in sys.linear if c.name == "misclassified"][0]
    assert sorted(v for _, v in mis.terms) == ["d1", "d2"]


def test_goal_negation_leaves_inputs_alone():
    base = encode_network(random_net(random.Random(5), 3, 4, 3))
    neg = encode_goal_negation(base, PredictionGoal(2))
    added = [c for c in neg.linear if c not in base.linear] + \
            [i.body for i in neg.indicators if i not in base.indicators]
    assert added
    for c in added:
        assert not set(c.vars) & set(neg.input_vars)
    assert [neg.var(v) for v in neg.input_vars] == [base.var(v) for v in base.input_vars]


def test_goal_negation_rejects_bad_class():
    with pytest.raises(EncodingError):
        encode_goal_negation(encode_network(BLOCK), PredictionGoal(2))


def test_toy_system_negation_reachable_only_through_z3_off():
    sys = encode_goal_negation(toy_integer_system(), PredictionGoal(0))
    ans = entails(Query(sys, Cube()))
    assert not ans.entailed
    mu = ans.counterexample
    assert mu["z3"] == 0 and mu["o"] == 2
    assert mu["i1"] <= 0 and mu["i2"] <= 0
    # with z3 forced on, o = 1 and the negated goal is unreachable
    b = sys.to_builder()
    b.add_linear([(1, "z3")], "=", 1, "force")
    assert entails(Query(b.build(), Cube())).entailed


def test_build_cube():
    sys = toy_integer_system()
    assert len(build_cube(sys, (3, 2))) == 2
    assert len(build_cube(sys, (3, 2), [])) == 0
    assert build_cube(sys, Instance((3, 2)), [1]) == Cube((("i2", 2),))
    with pytest.raises(EncodingError):
        build_cube(sys, (3, 2), [2])


def test_cube_rejects_repeated_var():
    with pytest.raises(EncodingError):
        Cube((("x0", 1), ("x0", 2)))


def test_builder_validation():
    b = SystemBuilder()
    b.add_var("x", REAL, 0, 1)
    with pytest.raises(EncodingError):
        b.add_var("x")
    with pytest.raises(EncodingError):
        b.add_var("w", INTEGER, 3, 1)
    with pytest.raises(EncodingError):
        LinConstraint((), "<=", 0)
    with pytest.raises(EncodingError):
        LinConstraint(((1, "x"),), "<", 0)
    b.add_linear([(1, "missing")], "<=", 0)
    with pytest.raises(EncodingError, match="undeclared"):
        b.build()


def test_indicator_literal_must_be_boolean():
    b = SystemBuilder()
    b.add_var("x", REAL, 0, 1)
    b.add_indicator("x", 1, [(1, "x")], "<=", 0)
    with pytest.raises(EncodingError, match="not boolean"):
        b.build()


def test_duplicate_terms_merge():
    c = LinConstraint(((1, "a"), (2, "b"), (3, "a")), "=", 1)
    assert c.terms == ((4, "a"), (2, "b"))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_fixed_inputs_determine_outputs(seed):
    rng = random.Random(seed)
    net = random_net(rng, rng.randint(1, 4), [rng.randint(1, 5)] * rng.randint(1, 2), rng.randint(2, 3))
    sys = encode_network(net)
    x = random_point(rng, net)
    bounds = propagate_bounds(Query(sys, build_cube(sys, x)))
    want = forward(net, x)
    for o, v in zip(sys.output_vars, want):
        assert bounds[o] == (v, v)


def test_lp_export_is_deterministic_and_complete(tmp_path):
    sys = encode_goal_negation(encode_network(BLOCK), PredictionGoal(0))
    export_lp(sys, None, tmp_path / "a.lp")
    export_lp(sys, None, tmp_path / "b.lp")
    a = (tmp_path / "a.lp").read_bytes()
    assert a == (tmp_path / "b.lp").read_bytes()
    text = a.decode()
    assert "fix_" not in text
    assert " beat1: d1 = 1 -> 1 o1 - 1 o0 >= 0" in text
    assert " on1_0: z1_0 = 1 -> 1 y1_0 <= 0" in text
    assert "Binaries\n z1_0\n z1_1\n d1\n" in text
    with_cube = format_lp(sys, build_cube(sys, ("1/2", "-0.25")))
    assert " fix_x0: 1 x0 = 0.5" in with_cube and " fix_x1: 1 x1 = -0.25" in with_cube


def test_lp_export_toy_integer_system():
    text = format_lp(toy_integer_system())
    assert "Generals\n i1\n i2\n o\n" in text
    assert " -1000 <= i1 <= 1000" in text
    assert " z3_off: z3 = 0 -> 1 z1 + 1 z2 >= 2" in text


def test_violations_reports_problems():
    sys = toy_integer_system()
    mu = {"i1": 1, "i2": 0, "z1": 0, "z2": 1, "z3": 1, "o": 1}
    assert sys.violations(mu) == []
    bad = dict(mu, o=2)
    assert any("o_is_1" in r for r in sys.violations(bad))
    assert any("cube literal" in r for r in sys.violations(mu, Cube((("i1", to_q(5)),))))
