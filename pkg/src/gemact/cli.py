"""Command-line interface: eval, table, verify, bench, train, probe.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from . import core, kernels, verify
from .core import ActivationSpec
from .nn import probes
from .nn.train import TrainConfig, config_fields, config_from_mapping, parse_config, run_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _spec(text: str) -> ActivationSpec:
    try:
        return ActivationSpec.parse(text)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}") from None


def _num(v: float) -> str:
    return repr(float(v))


def _second(x: float, spec: ActivationSpec) -> float:
    if spec.kind == "gem":
        return core.gem_second(x, spec.n)
    if spec.kind == "egem":
        return core._gem_second(float(x), spec.n, spec.eps)
    raise UsageError(f"--second is available for gem and egem only, not {spec}")


def cmd_eval(args, out) -> int:
    spec = args.act
    xs = [v for chunk in args.x for v in chunk]
    cols = ["x", "f"] + (["grad"] if args.grad else []) + (["second"] if args.second else [])
    print(",".join(cols), file=out)
    for x in xs:
        vals = [x, core.activation(x, spec)]
        if args.grad:
            vals.append(core.derivative(x, spec))
        if args.second:
            vals.append(_second(x, spec))
        print(",".join(_num(v) for v in vals), file=out)
    return EXIT_OK


def cmd_table(args, out) -> int:
    if not args.xmin < args.xmax:
        raise UsageError("--xmin must be smaller than --xmax")
    if args.steps < 2:
        raise UsageError("--steps must be at least 2")
    specs = args.acts
    span = args.xmax - args.xmin
    xs = [args.xmin + span * i / (args.steps - 1) for i in range(args.steps)]
    xs[-1] = args.xmax
    header = ["x"]
    for s in specs:
        header += [str(s), f"{s}_grad"]
    try:
        fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else out
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x in xs:
            row = [_num(x)]
            for s in specs:
                row += [_num(core.activation(x, s)), _num(core.derivative(x, s))]
            w.writerow(row)
    finally:
        if fh is not out:
            fh.close()
    return EXIT_OK


def cmd_verify(args, out) -> int:
    results = verify.run_suite(args.suite)
    if args.report:
        try:
            with open(args.report, "w", newline="", encoding="utf-8") as fh:
                verify.write_report(results, fh)
        except OSError as exc:
            raise UsageError(f"cannot write {args.report}: {exc.strerror}") from None
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed (suite {args.suite})", file=out)
    if failed:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(verify.REPORT_HEADER)
        for r in failed:
            w.writerow(r.row())
        return EXIT_FAIL
    return EXIT_OK


def cmd_bench(args, out) -> int:
    if args.iters < 3:
        raise UsageError("--iters must be at least 3")
    if args.elements < 1:
        raise UsageError("--elements must be at least 1")
    print(kernels.BENCH_HEADER, file=out)
    for spec in args.act:
        try:
            rep = kernels.bench(spec, args.elements, args.iters, args.precision)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        print(rep.csv_row(), file=out)
    print(f"# erf: {kernels.ERF_IMPL}", file=sys.stderr)
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {args.config}: {exc.strerror}") from None
        cfg = parse_config(text, cfg)
    overrides = {}
    for name in config_fields():
        val = getattr(args, f"cfg_{name}")
        if val is not None:
            overrides[name] = val
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return config_from_mapping(overrides, cfg)


def cmd_train(args, out) -> int:
    try:
        cfg = _train_config(args)
    except (KeyError, ValueError) as exc:
        raise UsageError(exc.args[0] if exc.args else str(exc)) from None
    report = run_config(cfg)
    text = report.to_csv()
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
    else:
        out.write(text)
    if report.flagged:
        print(f"run {report.status}: {report.message}", file=sys.stderr)
    return EXIT_OK


def cmd_probe(args, out) -> int:
    if args.samples < 1000:
        raise UsageError("--samples must be at least 1000")
    print(probes.PROBE_HEADER, file=out)
    for n in args.n:
        for depth in args.depth:
            try:
                res = probes.suppression_probe(n, depth, args.samples, args.seed)
            except (ValueError, TypeError) as exc:
                raise UsageError(str(exc)) from None
            print(res.csv(), file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gemact", description="GEM activation family: evaluation, verification, benchmarks, training.")
    sub = p.add_subparsers(dest="command", required=True, metavar="{eval,table,verify,bench,train,probe}")

    e = sub.add_parser("eval", help="evaluate an activation at points")
    e.add_argument("--act", type=_spec, required=True, help="activation spec, e.g. gem:n=2 or segem:n=1,eps=1")
    e.add_argument("--x", type=_floats, action="append", required=True, help="points (comma or space separated)")
    e.add_argument("--grad", action="store_true")
    e.add_argument("--second", action="store_true")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("table", help="curve table as CSV")
    t.add_argument("--acts", type=_spec, nargs="+", required=True)
    t.add_argument("--xmin", type=float, required=True)
    t.add_argument("--xmax", type=float, required=True)
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--out", default=None, help="output file (default stdout)")
    t.set_defaults(func=cmd_table)

    v = sub.add_parser("verify", help="run oracle checks")
    v.add_argument("--suite", choices=["core", "distances", "smoothness", "all"], required=True)
    v.add_argument("--report", default=None, help="write the full CSV report here")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="forward-kernel throughput")
    b.add_argument("--act", type=_spec, nargs="+", required=True)
    b.add_argument("--elements", type=int, default=1 << 24)
    b.add_argument("--iters", type=int, default=5)
    b.add_argument("--precision", choices=["single", "double"], default="double")
    b.set_defaults(func=cmd_bench)

    tr = sub.add_parser("train", help="train a dense net and write the per-epoch CSV")
    tr.add_argument("--config", default=None, help="key=value config file")
    tr.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    tr.add_argument("--out", default=None, help="output CSV (default stdout)")
    for f in dataclasses.fields(TrainConfig):
        tr.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", default=None, metavar=f.name.upper())
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("probe", help="gradient-suppression probe")
    pr.add_argument("--n", type=_ints, required=True)
    pr.add_argument("--depth", type=_ints, required=True)
    pr.add_argument("--samples", type=int, default=100_000)
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=cmd_probe)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gemact {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
