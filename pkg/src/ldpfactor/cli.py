"""Command line interface.

    ldpfactor optimize --workload prefix:n=64 --epsilon 1 --tune --out q.csv
    ldpfactor evaluate --strategy q.csv --workload prefix:n=64 --N 1000
    ldpfactor simulate --strategy q.csv --workload prefix:n=64 --synth powerlaw --N 1000 --trials 100 --out sim.csv
    ldpfactor sweep epsilon --workload prefix --n 64 --eps 0.5,1,2 --strategies rr,hadamard,opt --out t.csv
    ldpfactor plot t.csv --out t.svg

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from . import metrics as mt
from . import runtime as rt
from . import svgplot
from .model import StrategyMatrix, load_strategy, save_strategy
from .optimizer import OptimizerConfig, optimize

log = logging.getLogger("ldpfactor")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _epsilon(text):
    # accepts "ln3" style values since the textbook examples use them
    t = text.strip().lower()
    try:
        v = math.log(float(t[2:])) if t.startswith("ln") else float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("epsilon must be positive")
    return v


def trace_path(out):
    return Path(str(out) + ".trace.csv")


def _load_data(args, n):
    if getattr(args, "data", None):
        x = bench.load_data(args.data)
    elif getattr(args, "synth", None):
        if args.N is None:
            raise UsageError("--synth needs --N")
        x = bench.synth_data(args.synth, n, args.N)
    else:
        return None
    if x.n != n:
        raise UsageError(f"data vector has {x.n} types, workload has {n}")
    return x


def cmd_optimize(args):
    W = bench.make_workload(args.workload)
    config = OptimizerConfig(epsilon=args.epsilon, m=args.m, T=args.iters, beta=args.beta, seed=args.seed)
    res = optimize(W.matrix, config)
    save_strategy(res.Q, args.out, seed=args.seed, objective_value=res.final_objective)
    with open(trace_path(args.out), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "L_Q"])
        for i, L in enumerate(res.objective_trace):
            writer.writerow([i, repr(float(L))])
    Q = load_strategy(args.out).matrix
    L_worst = mt.worst_case_variance(mt.optimal_V(W.matrix, Q), Q, 1)
    print(f"L(Q)        {mt.objective_LQ(Q, W.matrix)!r}")
    print(f"L_worst     {L_worst!r}  (per user)")
    print(f"lower bound {res.lower_bound!r}")
    print(f"gap ratio   {res.gap_ratio:.6g}")
    print(f"iterations  {res.iterations_run} ({res.stopped}), beta={res.beta}")
    return 0


def cmd_evaluate(args):
    W = bench.make_workload(args.workload)
    Q = load_strategy(args.strategy)
    if Q.n != W.n:
        raise UsageError(f"strategy has {Q.n} columns, workload has {W.n}")
    x = _load_data(args, W.n)
    if x is None and args.N is None:
        raise UsageError("evaluate needs --data, --synth or --N")
    report = mt.variance_report(W, Q, x=x, N=args.N if x is None else None)
    d = report.to_dict()
    if args.format == "json":
        print(json.dumps(d, indent=2))
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        keys = [k for k in d if k != "per_type_variance"]
        writer.writerow(keys + ["per_type_variance"])
        writer.writerow([repr(d[k]) for k in keys] + [";".join(repr(v) for v in d["per_type_variance"])])
        sys.stdout.write(buf.getvalue())
    return 0


def _strategy_arg(spec, W, epsilon, seed):
    if Path(spec).is_file():
        return load_strategy(spec)
    if epsilon is None:
        raise UsageError(f"{spec!r} is not a file; building a named strategy needs --epsilon")
    return rt.strategy_from_spec(spec, W.matrix, epsilon, seed=seed)


def cmd_simulate(args):
    W = bench.make_workload(args.workload)
    Q = _strategy_arg(args.strategy, W, args.epsilon, args.seed)
    if not isinstance(Q, StrategyMatrix) or Q.n != W.n:
        raise UsageError(f"strategy does not match the workload domain n={W.n}")
    x = _load_data(args, W.n)
    if x is None:
        raise UsageError("simulate needs --data or --synth with --N")
    rows = rt.simulate(
        W, Q, x, args.trials, seed=args.seed, use_wnnls=args.wnnls, workload=W.kind, strategy=Q.kind
    )
    rt.write_simulation_csv(rows, args.out)
    err = np.array([r["squared_error"] for r in rows])
    print(f"{len(rows)} trials, mean squared error {err.mean():.6g} -> {args.out}")
    return 0


def cmd_sweep(args):
    strategies = [s for s in args.strategies.split(",") if s.strip()]
    opt_kw = {"T": args.iters} if args.iters is not None else None
    if args.kind == "epsilon":
        if args.n is None or not args.eps:
            raise UsageError("sweep epsilon needs --n and --eps")
        table = bench.sweep_epsilon(args.workload, strategies, args.n, args.eps, args.alpha, args.seed, opt_kw)
    else:
        if not args.ns or args.epsilon is None:
            raise UsageError("sweep domain needs --ns and --epsilon")
        table = bench.sweep_domain(args.workload, strategies, args.ns, args.epsilon, args.alpha, args.seed, opt_kw)
        for name, slope in table.extra["slopes"].items():
            print(f"slope {name}: {slope:.4f}")
    table.to_csv(args.out, timing=not args.stable)
    print(f"{len(table)} rows -> {args.out}")
    return 0


def cmd_plot(args):
    table = bench.ResultTable.from_csv(args.table)
    if not table.rows:
        raise UsageError(f"{args.table} has no rows to plot")
    x = args.x
    if x is None:
        x = "n" if len(set(table.column("n"))) > 1 else "epsilon"
    if x not in table.columns or args.y not in table.columns:
        raise UsageError(f"table has no column {x if x not in table.columns else args.y!r}")
    series = {}
    for r in table.rows:
        series.setdefault(str(r["strategy"]), []).append((r[x], r[args.y]))
    title = args.title or str(table.rows[0].get("workload", ""))
    svg = svgplot.render(
        series, xlabel=x, ylabel=args.y.replace("_", " "), title=title,
        logx=args.logx, logy=True, checksum=svgplot.file_sha256(args.table),
    )
    Path(args.out).write_text(svg)
    print(f"{len(series)} series -> {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ldpfactor", description="Optimized LDP factorization mechanisms.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", help="optimize a strategy for a workload")
    o.add_argument("--workload", required=True, help="e.g. prefix:n=64, range:n=128,width=20")
    o.add_argument("--epsilon", required=True, type=_epsilon)
    o.add_argument("--m", type=int, default=None, help="output count (default 4n)")
    o.add_argument("--iters", type=int, default=1500)
    step = o.add_mutually_exclusive_group()
    step.add_argument("--beta", type=float, default=None)
    step.add_argument("--tune", action="store_true", help="search the step size (default when --beta is absent)")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("evaluate", help="closed-form error analysis of a strategy file")
    e.add_argument("--strategy", required=True)
    e.add_argument("--workload", required=True)
    e.add_argument("--data", help="CSV data vector (header 'count')")
    e.add_argument("--synth", choices=bench.SYNTH_KINDS)
    e.add_argument("--N", type=int, default=None, help="user count (worst case when no data)")
    e.add_argument("--format", choices=("json", "csv"), default="json")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="Monte-Carlo trials to CSV")
    s.add_argument("--strategy", required=True, help="strategy file or baseline name")
    s.add_argument("--workload", required=True)
    s.add_argument("--epsilon", type=_epsilon, default=None)
    s.add_argument("--data")
    s.add_argument("--synth", choices=bench.SYNTH_KINDS)
    s.add_argument("--N", type=int, default=None)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--wnnls", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="sample-complexity sweep to a result table")
    w.add_argument("kind", choices=("epsilon", "domain"))
    w.add_argument("--workload", required=True)
    w.add_argument("--strategies", default="rr,hadamard,opt")
    w.add_argument("--n", type=int)
    w.add_argument("--eps", type=_floats)
    w.add_argument("--ns", type=_ints)
    w.add_argument("--epsilon", type=_epsilon)
    w.add_argument("--alpha", type=float, default=0.01)
    w.add_argument("--iters", type=int, default=None)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--stable", action="store_true", help="zero wall_time_s for byte-stable output")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="render a result table as SVG")
    pl.add_argument("table")
    pl.add_argument("--out", required=True)
    pl.add_argument("--x", choices=("epsilon", "n"), default=None)
    pl.add_argument("--y", default="sample_complexity")
    pl.add_argument("--logx", action="store_true")
    pl.add_argument("--title", default=None)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ldpfactor {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every module error becomes exit 1
        if args.verbose:
            log.exception("failed")
        print(f"ldpfactor {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
