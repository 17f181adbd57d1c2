#!/usr/bin/env python3
"""Batch-explain the bundled datasets and compare orderings on the digits fixture.

    python3 scripts/run_experiments.py sizes --out results/
    python3 scripts/run_experiments.py orderings --instances 4 --out results/

``sizes`` writes one CSV report per dataset plus a markdown table of
min/avg/max explanation size and time. ``orderings`` explains a few digit
images under each pixel ordering and writes the masks as PGM files.
"""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path

from nnexplain import bundled
from nnexplain.cli import render_pgm, run_batch
from nnexplain.explain import Problem, make_ordering, subset_minimal
from nnexplain.model import load_dataset, load_model, predict


@dataclass
class SizesConfig:
    datasets: tuple = ("toy", "synth9", "wine13")
    minimum: bool = True
    timeout: float = 300.0
    jobs: int = 1
    limit: int | None = None


@dataclass
class OrderingsConfig:
    dataset: str = "digits10"
    instances: int = 2
    orderings: tuple = ("lex", "center-distance", "intensity")
    shape: tuple = (10, 10)
    timeout: float = 300.0


@dataclass
class SizeRow:
    dataset: str
    features: int
    kind: str
    n: int
    failed: int
    size: tuple
    time_ms: tuple = field(default=(None, None, None))


def run_sizes(cfg: SizesConfig, out: Path) -> list:
    rows = []
    for name in cfg.datasets:
        model, data = bundled(f"{name}_model.json"), bundled(f"{name}.csv")
        report = run_batch(model, data, cfg.minimum, cfg.timeout, cfg.jobs, cfg.limit)
        (out / f"{name}_batch.csv").write_text(report.to_csv())
        print(f"== {name}\n{report.format_summary()}")
        n_in = load_model(model).input_dim
        for kind, s in report.summary().items():
            rows.append(SizeRow(name, n_in, kind, s["n"], s["failed"], s["size"], s["time_ms"]))
    return rows


def sizes_table(rows: list) -> str:
    def f(x, d=2):
        return "-" if x is None else f"{x:.{d}f}"
    lines = ["| dataset | #F | kind | n | failed | size m | size a | size M | a/#F | time a (ms) |",
             "|---|---|---|---|---|---|---|---|---|---|"]
    for r in rows:
        m, a, M = r.size
        share = f"{100 * a / r.features:.1f}%" if a is not None else "-"
        lines.append(f"| {r.dataset} | {r.features} | {r.kind} | {r.n} | {r.failed} | {f(m, 0)} | "
                     f"{f(a)} | {f(M, 0)} | {share} | {f(r.time_ms[1], 1)} |")
    return "\n".join(lines) + "\n"


def run_orderings(cfg: OrderingsConfig, out: Path) -> str:
    net = load_model(bundled(f"{cfg.dataset}_model.json"))
    ds = load_dataset(bundled(f"{cfg.dataset}.csv"), net.input_domain, net.class_names)
    # spread the picks across predicted classes
    by_class: dict = {}
    for k, inst in enumerate(ds.instances):
        by_class.setdefault(predict(net, inst.values), []).append(k)
    picks = []
    while len(picks) < cfg.instances and any(by_class.values()):
        for ks in by_class.values():
            if ks and len(picks) < cfg.instances:
                picks.append(ks.pop(0))
    lines = ["| instance | class | ordering | size | time (s) | calls |", "|---|---|---|---|---|---|"]
    lo, hi = net.input_domain[0]
    for k in picks:
        problem = Problem.build(net, ds.instances[k])
        (out / f"{cfg.dataset}_{k}_input.pgm").write_bytes(
            render_pgm(problem.instance.values, range(net.input_dim), cfg.shape, (lo, hi)))
        for kind in cfg.orderings:
            order = make_ordering(kind, problem.instance.values, image_shape=cfg.shape)
            exp = subset_minimal(problem.system, problem.cube, order)
            kept = exp.features(problem.system)
            (out / f"{cfg.dataset}_{k}_{kind}.pgm").write_bytes(
                render_pgm(problem.instance.values, kept, cfg.shape, (lo, hi)))
            lines.append(f"| {k} | {net.class_names[problem.target]} | {kind} | {len(exp)} | "
                         f"{exp.wall_time:.1f} | {exp.oracle_calls} |")
            print(lines[-1], flush=True)
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("sizes", help="batch explanation sizes per dataset")
    s.add_argument("--datasets", default=",".join(SizesConfig.datasets))
    s.add_argument("--no-minimum", action="store_true", help="skip cardinality-minimal runs")
    s.add_argument("--timeout", type=float, default=SizesConfig.timeout)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--limit", type=int)
    o = sub.add_parser("orderings", help="pixel orderings on the digits fixture")
    o.add_argument("--instances", type=int, default=OrderingsConfig.instances)
    for p in (s, o):
        p.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.cmd == "sizes":
        cfg = SizesConfig(tuple(args.datasets.split(",")), not args.no_minimum, args.timeout,
                          args.jobs, args.limit)
        table = sizes_table(run_sizes(cfg, args.out))
        (args.out / "sizes.md").write_text(table)
    else:
        table = run_orderings(OrderingsConfig(instances=args.instances), args.out)
        (args.out / "orderings.md").write_text(table)
    print(table)
    print(f"done in {time.perf_counter() - t0:.1f} s; results in {args.out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
