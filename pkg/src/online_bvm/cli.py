"""Command-line entry point: ``online-bvm {sec9,logistic,diagnose}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, MalformedCsv, SolverError
from .experiments.config import config_from_dict, load_config

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

COMMANDS = {
    "sec9": ("bernoulli_sec9", {}),
    "logistic": ("logistic_gaussian", {
        "n_total": 1024, "batch_sizes": [16, 32, 64, 128], "replications": 20, "dim": 1,
    }),
    "diagnose": ("diagnose", {"batch_sizes": [50], "methods": ["laplace"], "replications": 1}),
}

log = logging.getLogger("online_bvm")


def build_parser():
    parser = argparse.ArgumentParser(prog="online-bvm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sec9": "coverage table and relative-efficiency curve for fair-coin data",
        "logistic": "discrepancy scaling with the batch size",
        "diagnose": "per-step diagnostics for observations in a CSV file",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out-dir", dest="out_dir", help="directory for outputs")
        p.add_argument("--threads", type=int, help="worker processes")
        if name == "diagnose":
            p.add_argument("--data", help="CSV with header y,x1,...,xp")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args):
    experiment, defaults = COMMANDS[args.command]
    overrides = {"seed": args.seed, "out_dir": args.out_dir, "threads": args.threads,
                 "data": getattr(args, "data", None)}
    if args.config:
        cfg = load_config(args.config, **overrides)
        if cfg.experiment != experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {experiment!r}")
        return cfg
    return config_from_dict({"experiment": experiment, **defaults}, **overrides)


def _report_sec9(result, out):
    print("method     n      cp     cp_se  mean_length", file=out)
    for method, n, cp, se, length in result.coverage:
        print(f"{method:<9} {n:>5}  {cp:.3f}  {se:.4f}  {length:.4f}", file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "sec9":
            from .experiments.sec9 import run_sec9
            _report_sec9(run_sec9(cfg), sys.stdout)
        elif args.command == "logistic":
            from .experiments.scaling import run_logistic_scaling
            rows, _ = run_logistic_scaling(cfg)
            for row in rows:
                print(",".join(str(v) for v in row[:5]) + f",tv_upper={row[6]:.4g}")
        else:
            from .experiments.diagnose import run_diagnose
            steps = run_diagnose(cfg)
            last = steps[-1]
            print(f"steps={len(steps)} rho={last['rho']:.4g} "
                  f"tv_upper={last['discrepancy']['tv']['upper']:.4g} "
                  f"eps_kl={last['smoothness']['eps_kl']:.4g}")
        print(f"outputs written to {cfg.out_dir}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, MalformedCsv) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
