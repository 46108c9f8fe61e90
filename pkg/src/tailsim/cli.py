"""Command-line front end.

    tailsim run   --config cfg.yaml [--seed S] [--out metrics.csv] [--threads K]
    tailsim sweep --config cfg.yaml --grid grid.yaml [--out table.csv] [--threads K]
    tailsim rate  --csv metrics.csv [--burn-in F] [--column NAME]

Exit codes: 0 success (a diverged run is still data), 2 configuration or
usage errors, 3 I/O errors.
"""

import argparse
import sys

from .harness import (ConfigError, config_from_tree, fit_loglog_slope,
                      format_csv, format_sweep_csv, load_grid, load_tree,
                      read_metrics_csv, run_experiment, sweep, write_csv)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tailsim",
        description="Deterministic simulator for nested distributed "
                    "optimization under heavy-tailed gradient noise.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("--config", required=True, help="config document path")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--out", default=None,
                       help="metrics CSV path (default: config output, else stdout)")
    p_run.add_argument("--threads", type=_positive_int, default=1,
                       help="worker threads for node epochs (results identical)")

    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True,
                         help="YAML mapping of dotted config path -> value list")
    p_sweep.add_argument("--out", default=None,
                         help="sweep table CSV path (default stdout)")
    p_sweep.add_argument("--threads", type=_positive_int, default=1)

    p_rate = sub.add_parser("rate", help="fit a log-log convergence slope")
    p_rate.add_argument("--csv", required=True, help="metrics CSV from `run`")
    p_rate.add_argument("--burn-in", type=float, default=0.2,
                        help="leading fraction of rows to discard")
    p_rate.add_argument("--column", default="running_min_grad_sq",
                        help="metrics column to fit")
    return parser


def _cmd_run(args):
    tree = load_tree(args.config)
    if args.seed is not None:
        if not isinstance(tree, dict):
            raise ConfigError(["top level: expected a mapping"])
        tree = dict(tree)
        tree["seed"] = args.seed
    cfg = config_from_tree(tree)
    records = run_experiment(cfg, threads=args.threads)
    out = args.out if args.out is not None else cfg.output
    if out is None:
        sys.stdout.write(format_csv(records))
    else:
        write_csv(records, out)
    return 0


def _cmd_sweep(args):
    tree = load_tree(args.config)
    grid = load_grid(args.grid)
    results = sweep(tree, grid, threads=args.threads)
    table = format_sweep_csv(results, list(grid))
    if args.out is None:
        sys.stdout.write(table)
    else:
        try:
            with open(args.out, "w") as fh:
                fh.write(table)
        except OSError as e:
            raise OSError("writing %s: %s" % (args.out, e)) from e
    return 0


def _cmd_rate(args):
    cols = read_metrics_csv(args.csv)
    if args.column not in cols:
        raise ConfigError(["column %r not in %s (have: %s)"
                           % (args.column, args.csv, ",".join(cols))])
    try:
        slope = fit_loglog_slope(cols["round"], cols[args.column],
                                 burn_in=args.burn_in)
    except ValueError as e:
        raise ConfigError([str(e)])
    print("%.17g" % slope)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "rate": _cmd_rate}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print("configuration error:\n%s" % e, file=sys.stderr)
        return 2
    except ValueError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except OSError as e:
        print("i/o error: %s" % e, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
