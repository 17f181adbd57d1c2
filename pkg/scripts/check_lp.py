#!/usr/bin/env python3
"""Independent feasibility check of exported LP files.

Parses the LP text written by ``nnexplain encode`` with its own small
reader, rewrites each indicator as a big-M row and asks scipy's MILP
solver (HiGHS) whether the model is feasible. With ``--cross-check`` it
compares that verdict with the built-in oracle on random sub-cubes of the
toy fixture.

    python scripts/check_lp.py model.lp
    python scripts/check_lp.py --cross-check 20 --seed 3
"""
from __future__ import annotations

import argparse
import random
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

TERM = re.compile(r"([+-]?)\s*([0-9.]+(?:[eE][+-]?\d+)?)\s+([A-Za-z_][\w.]*)")
ROW = re.compile(r"^(.*?)(<=|>=|=)\s*([+-]?[0-9.]+(?:[eE][+-]?\d+)?)$")


@dataclass
class LpModel:
    rows: list = field(default_factory=list)        # (name, {var: coef}, sense, rhs)
    indicators: list = field(default_factory=list)  # (name, var, phase, {var: coef}, sense, rhs)
    bounds: dict = field(default_factory=dict)      # var -> [lo, hi]
    binaries: list = field(default_factory=list)
    generals: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def var(self, name):
        if name not in self.bounds:
            self.bounds[name] = [0.0, np.inf]  # LP-format default
            self.names.append(name)
        return name


def _expr(model: LpModel, text: str) -> dict:
    coefs = {}
    pos = 0
    text = text.strip()
    for m in TERM.finditer(text):
        if text[pos:m.start()].strip():
            raise ValueError(f"cannot parse term near {text[pos:m.start()]!r}")
        pos = m.end()
        c = float(m.group(2)) * (-1 if m.group(1) == "-" else 1)
        v = model.var(m.group(3))
        coefs[v] = coefs.get(v, 0.0) + c
    if text[pos:].strip():
        raise ValueError(f"trailing text {text[pos:]!r}")
    return coefs


def _row(model: LpModel, text: str):
    m = ROW.match(text.strip())
    if not m:
        raise ValueError(f"not a constraint: {text!r}")
    return _expr(model, m.group(1)), m.group(2), float(m.group(3))


def parse_lp(text: str) -> LpModel:
    model = LpModel()
    section = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "maximize", "subject to", "bounds", "binaries", "generals", "end"):
            section = low
            continue
        if section in ("minimize", "maximize"):
            _expr(model, line.split(":", 1)[1])
        elif section == "subject to":
            name, body = (s.strip() for s in line.split(":", 1))
            if "->" in body:
                head, tail = body.split("->")
                var, phase = (s.strip() for s in head.split("="))
                model.var(var)
                model.indicators.append((name, var, int(phase), *_row(model, tail)))
            else:
                model.rows.append((name, *_row(model, body)))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1] == "free":
                model.bounds[model.var(parts[0])] = [-np.inf, np.inf]
            elif len(parts) == 3 and parts[1] == ">=":
                model.bounds[model.var(parts[0])][0] = float(parts[2])
            elif len(parts) == 5:
                lo = -np.inf if parts[0] == "-inf" else float(parts[0])
                model.bounds[model.var(parts[2])] = [lo, float(parts[4])]
            else:
                raise ValueError(f"cannot parse bound {line!r}")
        elif section == "binaries":
            model.bounds[model.var(line)] = [0.0, 1.0]
            model.binaries.append(line)
        elif section == "generals":
            model.generals.append(model.var(line))
        elif section == "end":
            break
    return model


def feasible(model: LpModel, big_m: float = 1e4) -> bool:
    """Big-M reformulation solved with HiGHS; indicators become
    ``a.x - b <= M (1 - z)`` for phase 1 and ``<= M z`` for phase 0."""
    idx = {v: i for i, v in enumerate(model.names)}
    n = len(idx)
    A, lo, hi = [], [], []

    def add(coefs, lb, ub):
        row = np.zeros(n)
        for v, c in coefs.items():
            row[idx[v]] += c
        A.append(row)
        lo.append(lb)
        hi.append(ub)

    for _, coefs, sense, rhs in model.rows:
        add(coefs, rhs if sense in (">=", "=") else -np.inf, rhs if sense in ("<=", "=") else np.inf)
    for _, z, phase, coefs, sense, rhs in model.indicators:
        parts = []
        if sense in ("<=", "="):
            parts.append((dict(coefs), rhs))
        if sense in (">=", "="):
            parts.append(({v: -c for v, c in coefs.items()}, -rhs))
        for le, b in parts:
            row = dict(le)
            # phase 1: a.x + M z <= b + M ; phase 0: a.x - M z <= b
            row[z] = row.get(z, 0.0) + (big_m if phase == 1 else -big_m)
            add(row, -np.inf, b + (big_m if phase == 1 else 0.0))
    integrality = np.zeros(n)
    for v in model.binaries + model.generals:
        integrality[idx[v]] = 1
    lb = np.array([model.bounds[v][0] for v in model.names])
    ub = np.array([model.bounds[v][1] for v in model.names])
    cons = [LinearConstraint(np.array(A), lo, hi)] if A else []
    res = milp(np.zeros(n), constraints=cons, integrality=integrality, bounds=Bounds(lb, ub))
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise RuntimeError(f"MILP solver gave status {res.status}: {res.message}")


def cross_check(n: int, seed: int, verbose: bool = False) -> int:
    """Compare with the built-in oracle on random sub-cubes of the toy fixture."""
    from nnexplain import bundled
    from nnexplain.constraints import (PredictionGoal, build_cube, encode_goal_negation,
                                       encode_network, format_lp)
    from nnexplain.model import load_model, predict
    from nnexplain.oracle import Query, entails

    net = load_model(bundled("toy_model.json"))
    rng = random.Random(seed)
    mismatches = 0
    for k in range(n):
        point = [rng.randint(-10, 10) for _ in range(net.input_dim)]
        keep = [i for i in range(net.input_dim) if rng.random() < 0.6]
        sys_neg = encode_goal_negation(encode_network(net), PredictionGoal(predict(net, point)))
        cube = build_cube(sys_neg, point, keep)
        ours = entails(Query(sys_neg, cube)).entailed
        theirs = not feasible(parse_lp(format_lp(sys_neg, cube)))
        mismatches += ours != theirs
        if verbose or ours != theirs:
            print(f"{k:3d} point={point} keep={keep} oracle={ours} milp={theirs}")
    return mismatches


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("lp", nargs="?", type=Path)
    ap.add_argument("--cross-check", type=int, metavar="N")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--big-m", type=float, default=1e4)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    if args.lp is None and args.cross_check is None:
        ap.error("give an LP file or --cross-check N")
    if args.lp is not None:
        ok = feasible(parse_lp(args.lp.read_text()), args.big_m)
        print("feasible" if ok else "infeasible")
    if args.cross_check is not None:
        bad = cross_check(args.cross_check, args.seed, args.verbose)
        print(f"{args.cross_check - bad}/{args.cross_check} queries agree")
        return 1 if bad else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
