"""Command line: ``ncsaga run | summarize | check | theory``.

Exit codes: 0 success, 1 failed check, 2 invalid input, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .data import ParseError
from .harness import ALGORITHMS, ConfigError, ExperimentConfig, SummaryError, run_experiment, summarize

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3


def _seed_list(values):
    return [int(v) for v in values]


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--seed", type=int, action="append", required=True,
                   help="run seed (repeat for several seeds)")
    g = p.add_argument_group("problem")
    g.add_argument("--dataset", help="libsvm file (rows are normalized to unit length)")
    g.add_argument("--synthetic", metavar="N,D", help="synthetic classification problem of size N x D")
    g.add_argument("--separation", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--data-seed", type=int)
    g.add_argument("--lam", type=float)
    g.add_argument("--alpha", type=float)
    a = p.add_argument_group("algorithm")
    a.add_argument("--algorithm", action="append", choices=ALGORITHMS, dest="algorithms")
    a.add_argument("--step-policy", choices=("theory", "constant"))
    a.add_argument("--eta", type=float)
    a.add_argument("--eta0", type=float)
    a.add_argument("--etap", type=float)
    a.add_argument("--sgd-grid", help='JSON object, e.g. {"eta0": [0.1, 0.05], "etap": [0, 1]}')
    a.add_argument("--T", type=int, dest="T")
    a.add_argument("--budget-passes", type=float)
    a.add_argument("--K", type=int, dest="K")
    a.add_argument("--b", type=int, dest="b")
    a.add_argument("--tau", type=float)
    a.add_argument("--init", choices=("cold", "sgd-warm-pass"))
    a.add_argument("--warm-eta", type=float)
    a.add_argument("--reference-restarts", type=int, help="GD restarts for the f(x_hat) reference")
    a.add_argument("--reference-passes", type=float, help="IFO budget of the reference, in passes over the data")
    o = p.add_argument_group("output")
    o.add_argument("--out", dest="output_dir")
    o.add_argument("--metric-stride", type=int)
    o.add_argument("--timing", action="store_true", default=None,
                   help="fill the wall_ns column (makes CSVs non-reproducible)")
    o.add_argument("--jobs", type=int)


def config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig.from_json(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    if args.dataset and args.synthetic:
        raise ConfigError("give either --dataset or --synthetic")
    if args.dataset:
        base["problem"] = {"type": "libsvm", "path": args.dataset}
    elif args.synthetic:
        try:
            n, d = (int(v) for v in args.synthetic.split(","))
        except ValueError as exc:
            raise ConfigError(f"--synthetic expects N,D, got {args.synthetic!r}") from exc
        base["problem"] = {"type": "synthetic", "n": n, "d": d}
    for flag, key in (("separation", "separation"), ("noise", "noise"), ("data_seed", "seed")):
        if getattr(args, flag) is not None:
            base["problem"][key] = getattr(args, flag)
    if args.sgd_grid is not None:
        try:
            base["sgd_grid"] = json.loads(args.sgd_grid)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--sgd-grid is not valid JSON: {exc}") from exc
    for key in ("lam", "alpha", "algorithms", "step_policy", "eta", "eta0", "etap", "T", "budget_passes",
                "K", "b", "tau", "init", "warm_eta", "output_dir", "metric_stride", "timing", "jobs"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.reference_restarts is not None:
        base["reference"] = {**base["reference"], "restarts": args.reference_restarts}
    if args.reference_passes is not None:
        base["reference"] = {**base["reference"], "budget_passes": args.reference_passes}
    base["seeds"] = _seed_list(args.seed)
    try:
        return ExperimentConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    result = run_experiment(cfg)
    print(f"wrote {len(result.run_files)} runs to {cfg.output_dir} (f_ref={result.reference['f_ref']!r})")
    if result.diverged:
        for stem in result.diverged:
            print(f"diverged: {stem}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_summarize(args) -> int:
    files = []
    for f in args.files:
        p = Path(f)
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    checkpoints = [float(c) for c in args.checkpoints.split(",")] if args.checkpoints else None
    summary = summarize(files, checkpoints)
    if args.csv:
        Path(args.csv).write_text(summary.to_csv())
    sys.stdout.write(summary.to_text())
    return EXIT_OK


def cmd_check(args) -> int:
    from .diagnostics import report_json, standard_suite

    problem = None
    if args.dataset:
        from .data import normalize_rows, read_libsvm
        from .problems import LinearModelProblem, RegularizerParams

        ds = normalize_rows(read_libsvm(args.dataset))
        problem = LinearModelProblem(ds.to_dense(), ds.labels, RegularizerParams(args.lam, args.alpha))
    results = standard_suite(args.seed, problem)
    print(report_json(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_theory(args) -> int:
    from .theory import check_gamma_bound, closed_form_c, run_recursion, theory_params

    params = theory_params(args.n, args.L, args.T, args.b)
    trace = run_recursion(params)
    check = check_gamma_bound(params, trace)
    out = {
        "n": params.n, "L": params.L, "T": params.T, "b": params.b,
        "eta": params.eta, "beta": params.beta, "theta": check.theta,
        "c_max": check.c_max, "c_bound": check.c_bound, "c_bound_holds": bool(check.c_max <= check.c_bound),
        "gamma_n": check.gamma_n, "gamma_bound": check.bound, "gamma_bound_holds": check.holds,
        "sub_inequalities": check.sub_inequalities,
    }
    if args.full:
        out["c"] = trace.c.tolist()
        out["Gamma"] = trace.Gamma.tolist()
        cf = closed_form_c(params)
        out["c_closed_form"] = None if cf is None else cf.tolist()
    print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncsaga", description="SAGA for nonconvex finite sums")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an algorithm x seed grid and write CSV traces")
    _add_run_args(run)
    run.set_defaults(func=cmd_run)

    sm = sub.add_parser("summarize", help="median / IQR table over seeds at IFO checkpoints")
    sm.add_argument("files", nargs="+", help="run CSVs or directories holding them")
    sm.add_argument("--checkpoints", help="comma-separated passes over the data (default 1, 2, ...)")
    sm.add_argument("--csv", help="also write the table as CSV here")
    sm.set_defaults(func=cmd_summarize)

    ck = sub.add_parser("check", help="run the diagnostics suite and print a JSON report")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--dataset", help="check gradients on this libsvm file instead of a toy problem")
    ck.add_argument("--lam", type=float, default=0.001)
    ck.add_argument("--alpha", type=float, default=1.0)
    ck.set_defaults(func=cmd_check)

    th = sub.add_parser("theory", help="Lyapunov recursion and step-size bounds")
    th.add_argument("--n", type=int, required=True)
    th.add_argument("--L", type=float, required=True, dest="L")
    th.add_argument("--T", type=int, required=True, dest="T")
    th.add_argument("--b", type=int, default=1, dest="b")
    th.add_argument("--full", action="store_true", help="include the c_t and Gamma_t sequences")
    th.set_defaults(func=cmd_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, SummaryError, ParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
