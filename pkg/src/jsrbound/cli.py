"""``jsrbound`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Data goes to stdout (or ``--out``); verdicts and diagnostics go to stderr.

CSV schemas
  analyze / netctl   N,l,gamma_star,epsilon,kappa,delta,lower,upper,upper_alt,upper_best,status
  experiment rows    trial,n,m,<analyze columns>,rho_lo,rho_hi
  experiment summary N,l,trials,mean_gamma_star,mean_lower,mean_upper_best,median_upper_best,mean_delta,frac_unbounded
Floats are written with round-trip precision; an infinite bound is an empty cell.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from . import __version__, harness
from .scenario import BoundsConfig, analyze, reports_to_csv
from .specfun import DomainError
from .sysmodel import (
    ValidationError,
    export_traces_csv,
    generate_sample,
    load_system,
    load_traces,
    make_rng,
    save_traces,
    strip_hidden,
)
from .whitebox import BudgetExceeded, whitebox_bracket

log = logging.getLogger("jsrbound")


class UsageError(ValueError):
    pass


# -- argument helpers ------------------------------------------------------


def int_list(text):
    """``"20,120,220"`` or an inclusive range ``"20:1020:200"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) not in (2, 3) or (len(bits) == 3 and bits[2] <= 0):
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            step = bits[2] if len(bits) == 3 else 1
            out.extend(range(bits[0], bits[1] + 1, step))
        else:
            out.append(int(part))
    return tuple(out)


def int_pair(text):
    vals = int_list(text)
    if len(vals) == 1:
        return (vals[0], vals[0])
    return (min(vals), max(vals))


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_globals(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="RNG seed (default 0)")
    p.add_argument("--out", default=d(None), help="output path (default stdout)")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json", default=d(None))
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv", default=d(None))
    p.add_argument("--config", default=d(None), help="JSON file of option defaults")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _add_analysis(p):
    p.add_argument("--beta", type=float, default=0.95)
    p.add_argument("--l", type=_positive_int, default=None, help="trace length")
    p.add_argument("--m", type=_positive_int, default=None, help="bound on the number of modes")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-3, help="bisection tolerance on gamma")
    p.add_argument("--min-mode-prob", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="jsrbound",
        description="Data-driven bounds on the joint spectral radius of black-box switched linear systems.",
        epilog=__doc__.split("\n\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=__version__)
    _add_globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        sp = sub.add_parser(name, formatter_class=argparse.RawDescriptionHelpFormatter, **kw)
        _add_globals(sp, suppress=True)
        return sp

    s = add("simulate", help="sample traces from a system file")
    s.add_argument("system")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--l", type=_positive_int, default=1)
    s.add_argument("--keep-modes", action="store_true", help="keep hidden mode indices for replay")

    a = add("analyze", help="JSR bounds from a trace file")
    a.add_argument("traces")
    _add_analysis(a)

    w = add("whitebox", help="white-box JSR bracket of a system file")
    w.add_argument("system")
    w.add_argument("--depth", type=_positive_int, default=harness.DEFAULT_DEPTH)
    w.add_argument("--l", type=_positive_int, default=1)

    e = add("experiment", help="sweep N over random systems")
    e.add_argument("--trials", type=int, default=5)
    e.add_argument("--N-grid", dest="N_grid", type=int_list, default=(20, 220, 420, 620, 820))
    e.add_argument("--l-list", dest="l_list", type=int_list, default=(1,))
    e.add_argument("--n", dest="n_range", type=int_pair, default=(2, 2), help="n or lo,hi")
    e.add_argument("--m", dest="m_range", type=int_pair, default=(2, 2), help="m or lo,hi")
    e.add_argument("--beta", type=float, default=0.95)
    e.add_argument("--depth", type=_positive_int, default=harness.DEFAULT_DEPTH)
    e.add_argument("--with-oracle", action="store_true")
    e.add_argument("--summary", default=None, help="path for the per-N averaged CSV")
    e.add_argument("--gnuplot", default=None, help="path for a gnuplot script over the summary")
    e.add_argument("--workers", type=int, default=1)

    v = add("validate-beta", help="fraction of random systems whose upper bound is valid")
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--beta", type=float, default=0.95)
    v.add_argument("--n", dest="n_choices", type=int_list, default=(2, 3))
    v.add_argument("--m", dest="m_choices", type=int_list, default=(2, 3))
    v.add_argument("--N-range", dest="N_range", type=int_pair, default=(50, 400))
    v.add_argument("--l", type=_positive_int, default=1)
    v.add_argument("--depth", type=_positive_int, default=harness.DEFAULT_DEPTH)
    v.add_argument("--workers", type=int, default=1)

    nc = add("netctl", help="networked control demo")
    nc.add_argument("--users", type=int, default=3)
    nc.add_argument("--N", dest="N_grid", type=int_list, default=(100, 500, 1000, 2000, 5000))
    nc.add_argument("--beta", type=float, default=0.95)
    nc.add_argument("--l", type=_positive_int, default=1)
    return p


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config``; explicit flags still win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    known = set(vars(args))
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for k, v in cfg.items():
        if isinstance(v, list):
            cfg[k] = tuple(v)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


# -- output ----------------------------------------------------------------


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _say(msg):
    print(msg, file=sys.stderr)


def _dumps(obj):
    def fix(v):
        if isinstance(v, float) and not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [fix(x) for x in v]
        return v

    return json.dumps(fix(obj), indent=2) + "\n"


# -- commands --------------------------------------------------------------


def cmd_simulate(args):
    if args.N < 1:
        raise UsageError("--N must be >= 1")
    if not args.out:
        raise UsageError("simulate needs --out for the trace file")
    sys_ = load_system(args.system)
    sample = generate_sample(sys_, args.N, args.l, make_rng(args.seed))
    if not args.keep_modes:
        sample = strip_hidden(sample)
    if args.fmt == "csv":
        export_traces_csv(sample, args.out)
    else:
        save_traces(sample, args.out)
    _say(f"wrote {sample.N} traces of length {sample.l} to {args.out}")
    return 0


def cmd_analyze(args):
    sample = load_traces(args.traces, read_modes=False)
    if args.m is None and args.min_mode_prob is None:
        raise UsageError("give --m (a bound on the number of modes) or --min-mode-prob")
    cfg = BoundsConfig(
        beta=args.beta, l=args.l, eta=args.eta, alpha=args.tol, m_claimed=args.m, min_mode_prob=args.min_mode_prob
    )
    rep = analyze(sample, cfg)
    if args.fmt == "csv":
        _emit(args, reports_to_csv([rep]))
    else:
        _emit(args, rep.to_json(indent=2) + "\n")
    _say(f"verdict: {rep.verdict} (lower={rep.lower:.6g}, upper={rep.upper_best:.6g})")
    return 0


def cmd_whitebox(args):
    br = whitebox_bracket(load_system(args.system), depth=args.depth, l=args.l)
    _emit(args, br.to_json(indent=2) + "\n")
    return 0


def cmd_experiment(args):
    cfg = harness.ExperimentConfig(
        seed=args.seed,
        trials=args.trials,
        N_grid=tuple(args.N_grid),
        l_list=tuple(args.l_list),
        n_range=tuple(args.n_range),
        m_range=tuple(args.m_range),
        beta=args.beta,
        depth=args.depth,
        with_oracle=args.with_oracle,
        workers=args.workers,
    )
    rows = harness.run_sweep(cfg)
    _emit(args, harness.rows_to_csv(rows, harness.SWEEP_FIELDS))
    summary = harness.summarize(rows)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(harness.rows_to_csv(summary, harness.SUMMARY_FIELDS))
        if args.gnuplot:
            with open(args.gnuplot, "w") as fh:
                fh.write(harness.gnuplot_script(args.summary))
    elif args.gnuplot:
        raise UsageError("--gnuplot needs --summary")
    for s in summary:
        _say(f"N={s['N']:>6} l={s['l']} mean lower={s['mean_lower']:.4f} median upper={s['median_upper_best']:.4f} mean delta={s['mean_delta']:.4f}")
    return 0


def cmd_validate_beta(args):
    cfg = harness.ValidityConfig(
        seed=args.seed,
        trials=args.trials,
        beta=args.beta,
        n_choices=tuple(args.n_choices),
        m_choices=tuple(args.m_choices),
        N_range=tuple(args.N_range),
        l=args.l,
        depth=args.depth,
        workers=args.workers,
    )
    res = harness.run_validity(cfg)
    _emit(args, _dumps(res))
    lo, hi = res["wilson95"]
    _say(f"correctness {res['correctness']:.4f} over {res['trials']} systems, Wilson 95% [{lo:.4f}, {hi:.4f}]; skipped {res['skipped']}")
    return 0


def cmd_netctl(args):
    res = harness.run_netctl(args.users, args.N_grid, beta=args.beta, seed=args.seed, l=args.l)
    if args.fmt == "csv":
        _emit(args, reports_to_csv(res.reports))
    else:
        _emit(args, _dumps({"users": res.users, "reports": [r.to_dict() for r in res.reports]}))
    last = res.reports[-1]
    first = res.first_stable_N()
    _say(f"verdict at N={last.N}: {last.verdict} (upper={last.upper_best:.6g})")
    _say("upper bound never drops below 1" if first is None else f"upper bound below 1 from N={first}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "whitebox": cmd_whitebox,
    "experiment": cmd_experiment,
    "validate-beta": cmd_validate_beta,
    "netctl": cmd_netctl,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        _say(f"error: {exc}")
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError, DomainError, BudgetExceeded, OSError, ValueError) as exc:
        _say(f"error: {exc}")
        return 2
    except Exception as exc:  # noqa: BLE001
        _say(f"failure: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
