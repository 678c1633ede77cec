"""Command line: ``extrafw run|validate|slopes``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
import argparse
import json
import sys

from .data_io import DataError
from .harness import (
    ConfigError, NonPositiveGap, Trace, load_config, run_experiment, slope_fit,
)

EXIT_CONFIG = 2
EXIT_DATA = 3


def _cmd_run(args):
    cfg = load_config(args.config)
    jobs = 1 if args.sequential else args.jobs
    res = run_experiment(cfg, out=args.out, jobs=jobs)
    out = args.out or cfg.output
    for name, s in res.summary["solvers"].items():
        cert = s["certificate"]
        cert = "-" if cert is None else f"{cert:.3e}"
        print(f"{name:8s} k={s['final_k']:<6d} f={s['f']:.10g} opt={s['optimality']:.3e} cert={cert}")
    print(f"wrote {out}")
    return 0


def _cmd_validate(args):
    cfg = load_config(args.config)
    print(f"{args.config}: ok ({cfg.task}, {cfg.constraint['type']}, solvers {', '.join(cfg.solvers)})")
    return 0


def _cmd_slopes(args):
    try:
        tr = Trace.from_csv(args.trace)
    except (OSError, StopIteration, ValueError) as exc:
        raise DataError(f"cannot read trace {args.trace}: {exc}") from None
    if args.column not in tr.columns:
        raise ConfigError(f"trace has no column {args.column!r}")
    try:
        s = slope_fit(tr, (args.k_from, args.k_to), column=args.column, clip=args.clip)
    except NonPositiveGap as exc:
        raise DataError(f"{exc}; pass --clip to clip at 1e-16") from None
    print(json.dumps({"trace": args.trace, "column": args.column, "from": args.k_from,
                      "to": args.k_to, "slope": s}))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="extrafw", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--jobs", type=int, default=1, help="solvers run concurrently")
    r.add_argument("--sequential", action="store_true", help="force one solver at a time")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    s = sub.add_parser("slopes", help="log-log slope of a trace column")
    s.add_argument("trace")
    s.add_argument("--from", dest="k_from", type=int, required=True)
    s.add_argument("--to", dest="k_to", type=int, required=True)
    s.add_argument("--column", default="optimality")
    s.add_argument("--clip", action="store_true", help="clip non-positive values at 1e-16")
    s.set_defaults(func=_cmd_slopes)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
