"""Command-line entry point: ``nnexplain <command> ...``.

Exit codes: 0 success, 1 I/O or parse error, 2 precondition failed
(e.g. the instance is not classified as the requested class),
3 a candidate explanation was rejected.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .constraints import (EncodingError, PredictionGoal, build_cube, encode_goal_negation,
                          encode_network, format_lp)
from .explain import (CARDINALITY_MINIMAL, SUBSET_MINIMAL, UNVERIFIED, NotEntailedError,
                      Problem, cardinality_minimal, enumerate_explanations, make_ordering,
                      subset_minimal, validate_and_shrink)
from .model import (Dataset, Instance, ModelError, check_instance, load_dataset, load_model,
                    predict, save_model, train_tiny)
from .oracle import OracleConfig, OracleTimeout
from .rational import floor_q, to_json_number, to_q

EXIT_OK, EXIT_IO, EXIT_PRECONDITION, EXIT_INVALID = 0, 1, 2, 3
DATASET_BUDGET = 1800.0


class Precondition(Exception):
    pass


# -- shared argument handling ---------------------------------------------

def _add_instance_args(p: argparse.ArgumentParser):
    p.add_argument("--dataset", type=Path, help="CSV dataset holding the instance")
    p.add_argument("--index", type=int, help="row of --dataset (0-based)")
    p.add_argument("--instance", help="comma-separated feature values instead of a dataset row")


def _parse_shape(text: str) -> tuple:
    try:
        h, w = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("shape sides must be positive")
    return h, w


def _read_dataset(path: Path, net) -> Dataset:
    return load_dataset(path, domain=net.input_domain, class_names=net.class_names)


def _resolve_instance(args, net) -> tuple:
    """(instance, instance_id, feature_names)."""
    names = None
    if args.instance is not None:
        if args.dataset is not None:
            raise Precondition("give either --instance or --dataset, not both")
        values = tuple(to_q(v.strip()) for v in args.instance.split(","))
        inst, iid = Instance(values), None
    else:
        if args.dataset is None or args.index is None:
            raise Precondition("need --instance, or --dataset with --index")
        ds = _read_dataset(args.dataset, net)
        if not 0 <= args.index < len(ds):
            raise Precondition(f"--index {args.index} outside 0..{len(ds) - 1}")
        inst, iid, names = ds.instances[args.index], args.index, ds.feature_names
    check_instance(net, inst)
    return inst, iid, names


def _target(net, inst: Instance, text: Optional[str]) -> int:
    pred = predict(net, inst.values)
    if text is None:
        return pred
    if text in net.class_names:
        target = net.class_names.index(text)
    elif text.lstrip("-").isdigit() and 0 <= int(text) < net.n_classes:
        target = int(text)
    else:
        raise Precondition(f"unknown class {text!r}; known: {', '.join(net.class_names)}")
    if target != pred:
        raise Precondition(f"instance is classified as {net.class_names[pred]!r}, "
                           f"not {net.class_names[target]!r}")
    return target


def _emit(text: str, out: Optional[Path]):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _exp_json(exp, problem: Problem, iid, names, timing: bool) -> dict:
    d = exp.to_json(problem.system, iid, problem.net.class_names[problem.target], names)
    if not timing:
        d["time_ms"] = None
    return d


# -- explain ----------------------------------------------------------------

def cmd_explain(args) -> int:
    net = load_model(args.model)
    inst, iid, names = _resolve_instance(args, net)
    problem = Problem.build(net, inst, _target(net, inst, args.target_class))
    order = make_ordering(args.order, inst, args.shape)
    cfg = OracleConfig()
    if args.enumerate:
        exps = enumerate_explanations(problem.system, problem.cube, args.enumerate, order, cfg)
        payload = [_exp_json(e, problem, iid, names, not args.no_timing) for e in exps]
    else:
        if args.minimum:
            exp = cardinality_minimal(problem.system, problem.cube, cfg)
        else:
            exp = subset_minimal(problem.system, problem.cube, order, cfg)
        payload = _exp_json(exp, problem, iid, names, not args.no_timing)
    _emit(json.dumps(payload, indent=1) + "\n", args.out)
    return EXIT_OK


# -- batch ------------------------------------------------------------------

@dataclass
class BatchReport:
    """Per-instance rows plus min/avg/max of size and time by kind."""

    rows: list = field(default_factory=list)

    COLUMNS = ("instance_id", "kind", "size", "time_ms", "oracle_calls", "status", "features")

    def summary(self) -> dict:
        out = {}
        for kind in dict.fromkeys(r["kind"] for r in self.rows):
            done = [r for r in self.rows if r["kind"] == kind and r["status"] == "ok"]
            sizes = [r["size"] for r in done]
            times = [r["time_ms"] for r in done]
            out[kind] = {
                "n": len(done),
                "failed": sum(1 for r in self.rows if r["kind"] == kind) - len(done),
                "size": _mam(sizes),
                "time_ms": _mam(times),
            }
        return out

    def total_seconds(self) -> float:
        return sum(r["time_ms"] or 0 for r in self.rows) / 1000

    @classmethod
    def from_csv(cls, text: str) -> "BatchReport":
        rows = []
        for r in csv.DictReader(io.StringIO(text)):
            for key in ("instance_id", "size", "oracle_calls"):
                r[key] = int(r[key]) if r[key] != "" else ""
            r["time_ms"] = float(r["time_ms"]) if r["time_ms"] != "" else None
            rows.append(r)
        return cls(rows)

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            row = dict(r)
            if not timing:
                row["time_ms"] = ""
            w.writerow(row)
        return buf.getvalue()

    def format_summary(self, timing: bool = True) -> str:
        lines = [f"{'kind':<20} {'n':>4} {'fail':>4} {'m':>4} {'a':>7} {'M':>4}"
                 + ("  time m/a/M (ms)" if timing else "")]
        for kind, s in self.summary().items():
            m, a, M = s["size"]
            line = f"{kind:<20} {s['n']:>4} {s['failed']:>4} {_num(m):>4} {_num(a, 2):>7} {_num(M):>4}"
            if timing:
                tm, ta, tM = s["time_ms"]
                line += f"  {_num(tm, 1)}/{_num(ta, 1)}/{_num(tM, 1)}"
            lines.append(line)
        if timing and self.rows:
            total = self.total_seconds()
            failed = any(r["status"] != "ok" for r in self.rows)
            verdict = "no" if failed or total > DATASET_BUDGET else "yes"
            lines.append(f"total {total:.1f} s; all explained within {DATASET_BUDGET:.0f} s: {verdict}")
        return "\n".join(lines) + "\n"


def _mam(xs):
    if not xs:
        return (None, None, None)
    return (min(xs), sum(xs) / len(xs), max(xs))


def _num(x, digits=0):
    if x is None:
        return "-"
    return f"{x:.{digits}f}" if digits else f"{x:g}"


_WORKER: dict = {}


def _batch_init(model: str, dataset: str):
    net = load_model(model)
    _WORKER["net"] = net
    _WORKER["ds"] = _read_dataset(Path(dataset), net)


def _batch_one(job) -> list:
    index, kinds, timeout = job
    net, ds = _WORKER["net"], _WORKER["ds"]
    problem = Problem.build(net, ds.instances[index])
    rows = []
    for kind in kinds:
        cfg = OracleConfig(deadline=time.monotonic() + timeout if timeout else None)
        t0 = time.perf_counter()
        try:
            if kind == CARDINALITY_MINIMAL:
                exp = cardinality_minimal(problem.system, problem.cube, cfg)
            else:
                exp = subset_minimal(problem.system, problem.cube, None, cfg)
            rows.append({"instance_id": index, "kind": kind, "size": len(exp),
                         "time_ms": round(exp.wall_time * 1000, 3),
                         "oracle_calls": exp.oracle_calls, "status": "ok",
                         "features": " ".join(map(str, exp.features(problem.system)))})
        except (OracleTimeout, NotEntailedError) as e:
            # a tie between the top logits is not a certifiable prediction
            status = "timeout" if isinstance(e, OracleTimeout) else "not_entailed"
            rows.append({"instance_id": index, "kind": kind, "size": "",
                         "time_ms": round((time.perf_counter() - t0) * 1000, 3),
                         "oracle_calls": "", "status": status, "features": ""})
    return rows


def run_batch(model: Path, dataset: Path, minimum: bool = False, timeout: float = 300.0,
              jobs: int = 1, limit: Optional[int] = None) -> BatchReport:
    _batch_init(str(model), str(dataset))
    n = len(_WORKER["ds"])
    if limit is not None:
        n = min(n, limit)
    kinds = (SUBSET_MINIMAL, CARDINALITY_MINIMAL) if minimum else (SUBSET_MINIMAL,)
    work = [(i, kinds, timeout) for i in range(n)]
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(jobs, initializer=_batch_init,
                                 initargs=(str(model), str(dataset))) as pool:
            # map keeps submission order, so rows stay in instance order
            parts = list(pool.map(_batch_one, work))
    else:
        parts = [_batch_one(job) for job in work]
    return BatchReport([r for part in parts for r in part])


def cmd_batch(args) -> int:
    report = run_batch(args.model, args.dataset, args.minimum, args.timeout_per_instance,
                       args.jobs, args.limit)
    timing = not args.no_timing
    if args.out is not None:
        args.out.write_text(report.to_csv(timing))
    else:
        sys.stdout.write(report.to_csv(timing))
    sys.stdout.write(report.format_summary(timing))
    return EXIT_OK


# -- encode / validate / render / train ------------------------------------

def cmd_encode(args) -> int:
    net = load_model(args.model)
    system = encode_network(net)
    cube = None
    if args.instance is not None or args.dataset is not None:
        inst, _, _ = _resolve_instance(args, net)
        target = _target(net, inst, args.target_class)
        system = encode_goal_negation(system, PredictionGoal(target))
        cube = build_cube(system, inst)
    elif args.target_class is not None:
        names = net.class_names
        t = names.index(args.target_class) if args.target_class in names else int(args.target_class)
        system = encode_goal_negation(system, PredictionGoal(t))
    _emit(format_lp(system, cube), args.out)
    return EXIT_OK


def _parse_features(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    return [int(t) for t in text.split(",")]


def cmd_validate(args) -> int:
    net = load_model(args.model)
    inst, iid, names = _resolve_instance(args, net)
    problem = Problem.build(net, inst, _target(net, inst, args.target_class))
    candidate = problem.cube_of(_parse_features(args.features))
    exp = validate_and_shrink(problem.system, candidate, problem.cube,
                              make_ordering(args.order, inst, args.shape))
    if exp.kind == UNVERIFIED:
        mu = exp.counterexample
        cex = [to_json_number(mu[v]) for v in problem.system.input_vars]
        pred = predict(net, [mu[v] for v in problem.system.input_vars])
        sys.stdout.write(json.dumps({"valid": False, "counterexample": cex,
                                     "predicted_class": net.class_names[pred]}) + "\n")
        return EXIT_INVALID
    _emit(json.dumps(_exp_json(exp, problem, iid, names, not args.no_timing), indent=1) + "\n",
          args.out)
    return EXIT_OK


def render_pgm(values, kept, shape: tuple, value_range: tuple) -> bytes:
    """Binary greyscale image: kept pixels scaled to 0..254, the rest 255."""
    h, w = shape
    if h * w != len(values):
        raise Precondition(f"shape {h}x{w} does not match {len(values)} features")
    lo, hi = (to_q(v) for v in value_range)
    kept = set(kept)
    pixels = bytearray()
    for i, v in enumerate(values):
        if i not in kept:
            pixels.append(255)
            continue
        x = 0 if hi == lo else floor_q(254 * (to_q(v) - lo) / (hi - lo) + to_q("1/2"))
        pixels.append(min(254, max(0, int(x))))
    return f"P5\n{w} {h}\n255\n".encode() + bytes(pixels)


def cmd_render(args) -> int:
    data = json.loads(args.explanation.read_text())
    if isinstance(data, list):
        if not data:
            raise Precondition("explanation file holds an empty list")
        data = data[0]
    kept = [int(f["index"]) for f in data["features"]]
    if args.model is not None:
        net = load_model(args.model)
        inst, _, _ = _resolve_instance(args, net)
        lo = min(d[0] for d in net.input_domain)
        hi = max(d[1] for d in net.input_domain)
    else:
        if args.instance is not None:
            inst = Instance(tuple(to_q(v) for v in args.instance.split(",")))
        elif args.dataset is not None and args.index is not None:
            inst = load_dataset(args.dataset).instances[args.index]
        else:
            raise Precondition("need --instance, or --dataset with --index")
        lo, hi = args.range
    args.out.write_bytes(render_pgm(inst.values, kept, args.shape, (lo, hi)))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    net = train_tiny(ds, args.hidden, args.epochs, args.seed, lr=args.lr)
    save_model(net, args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _parse_range(text: str) -> tuple:
    try:
        lo, hi = (to_q(t) for t in text.split(","))
    except (ValueError, ArithmeticError):
        raise argparse.ArgumentTypeError("range must look like LO,HI") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("range LO exceeds HI")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nnexplain", description="Certified explanations for ReLU classifiers.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="explain one prediction")
    p.add_argument("model", type=Path)
    _add_instance_args(p)
    p.add_argument("--target-class")
    p.add_argument("--minimum", action="store_true", help="smallest explanation instead of subset-minimal")
    p.add_argument("--order", default="lex", choices=["lex", "center-distance", "intensity"])
    p.add_argument("--shape", type=_parse_shape, help="image shape HxW for --order center-distance")
    p.add_argument("--enumerate", type=int, metavar="K", help="up to K distinct subset-minimal explanations")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("batch", help="explain every instance of a dataset")
    p.add_argument("model", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--minimum", action="store_true", help="also compute smallest explanations")
    p.add_argument("--timeout-per-instance", type=float, default=300.0, metavar="SECONDS")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--limit", type=int, help="only the first N instances")
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--out", type=Path, help="CSV report (default: stdout)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("encode", help="write the constraint system in LP format")
    p.add_argument("model", type=Path)
    _add_instance_args(p)
    p.add_argument("--target-class")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("validate", help="check a candidate explanation and shrink it")
    p.add_argument("model", type=Path)
    _add_instance_args(p)
    p.add_argument("--features", required=True, help="comma-separated feature indices (may be empty)")
    p.add_argument("--target-class")
    p.add_argument("--order", default="lex", choices=["lex", "center-distance", "intensity"])
    p.add_argument("--shape", type=_parse_shape)
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("render", help="draw an explanation as a PGM mask")
    p.add_argument("explanation", type=Path)
    _add_instance_args(p)
    p.add_argument("--model", type=Path, help="take the intensity range from the model domain")
    p.add_argument("--range", type=_parse_range, default=(to_q(0), to_q(1)), metavar="LO,HI")
    p.add_argument("--shape", type=_parse_shape, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train", help="fit a one-hidden-layer fixture network")
    p.add_argument("dataset", type=Path)
    p.add_argument("--hidden", type=int, default=10)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "order", None) == "center-distance" and args.shape is None:
        ap.error("--order center-distance needs --shape HxW")
    try:
        return args.func(args)
    except (Precondition, NotEntailedError) as e:
        print(f"nnexplain: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (OSError, ModelError, EncodingError, json.JSONDecodeError, KeyError,
            ValueError, ArithmeticError) as e:
        print(f"nnexplain: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
