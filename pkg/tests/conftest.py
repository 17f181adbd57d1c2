"""Shared fixtures, plus an audit of every refuting answer the suite sees.

Every ``entailed=False`` answer produced through the oracle (or recycled
from an earlier counterexample) is re-checked on the spot: the assignment
must satisfy the system and the cube, and when the system encodes a
network, exact forward evaluation of its inputs must give some other
class a logit at least as large as the target's.
"""
from __future__ import annotations

import functools

import pytest

import nnexplain
import nnexplain.explain as explain_mod
import nnexplain.oracle as oracle_mod
from nnexplain.model import Network, forward

AUDIT = {"checked": 0, "violations": []}
ACCEPTANCE: dict = {}


def audit_counterexample(system, cube, mu) -> list:
    problems = list(system.violations(mu, cube))
    net = system.source
    if isinstance(net, Network) and system.goal is not None:
        logits = forward(net, [mu[v] for v in system.input_vars])
        c = system.goal
        if not any(logits[j] >= logits[c] for j in range(len(logits)) if j != c):
            problems.append(f"forward logits {logits} still prefer class {c}")
    elif system.class_values is not None and system.goal is not None:
        if mu[system.output_vars[0]] == system.class_values[system.goal]:
            problems.append("output equals the target class value")
    return problems


def _record(system, cube, ans):
    if ans is not None and not ans.entailed:
        AUDIT["checked"] += 1
        bad = audit_counterexample(system, cube, ans.counterexample)
        if bad:
            AUDIT["violations"].append(bad)
            raise AssertionError(f"invalid counterexample: {bad}")
    return ans


def _wrap_oracle(fn):
    @functools.wraps(fn)
    def wrapped(q, config=None, anchor=None):
        return _record(q.system, q.cube, fn(q, config, anchor))
    return wrapped


def _wrap_point(fn):
    @functools.wraps(fn)
    def wrapped(system, inputs, cube=None):
        mu = fn(system, inputs, cube)
        if mu is not None:
            _record(system, cube, oracle_mod.OracleAnswer(False, mu))
        return mu
    return wrapped


# installed at import time, before test modules bind the names
for _mod in (oracle_mod, explain_mod, nnexplain):
    for _name in ("entails", "reference_entails"):
        if hasattr(_mod, _name) and not hasattr(getattr(_mod, _name), "__wrapped__"):
            setattr(_mod, _name, _wrap_oracle(getattr(_mod, _name)))
explain_mod.complete_point = _wrap_point(explain_mod.complete_point)


def record_criterion(number: int, passed: bool, detail: str):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    if 4 in ACCEPTANCE:
        ok = not AUDIT["violations"]
        ACCEPTANCE[4] = (f"criterion 4: {'PASS' if ok else 'FAIL'}  {AUDIT['checked']} refuting answers "
                         f"audited across the whole run, {len(AUDIT['violations'])} violations")
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def data():
    return nnexplain.bundled
