"""Command-line experiment runner.

Subcommands: generate, train, eval, ablate, ekf. Each takes --config PATH
(a JSON experiment config) plus optional overrides. Exit codes: 0 success,
2 config/schema error, 3 missing file, 4 numeric/training failure,
5 failed precondition. STRUCTNODE_LOG in {error, info, debug} sets the
log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import load_config
from .errors import (
    ConfigError,
    FilterDivergenceError,
    IntegrationError,
    PreconditionError,
    TrainingError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4
EXIT_PRECONDITION = 5

log = logging.getLogger("structnode")


def _setup_logging():
    level = os.environ.get("STRUCTNODE_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "info"
    logging.basicConfig(level=levels[level],
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="structnode",
        description="Learn state-space models from partial observations "
                    "with observer-based recognition.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("generate", "simulate and write a training dataset"),
        ("train", "train a model on a generated dataset"),
        ("eval", "evaluate a trained model on fresh test trajectories"),
        ("ablate", "sweep t_c or the noise variance with full retrains"),
        ("ekf", "run the extended Kalman filter with a trained model"),
    ]:
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for dataset generation")
        p.add_argument("--deterministic", action="store_true",
                       help="force serial execution")
    return parser


def _load(args):
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if updates:
        data = cfg.to_dict()
        data.update(updates)
        from .config import ExperimentConfig

        cfg = ExperimentConfig.from_dict(data)
    return cfg


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    threads = 1 if args.deterministic else max(1, args.threads)
    try:
        cfg = _load(args)
        from . import experiments

        if args.command == "generate":
            experiments.run_generate(cfg, threads=threads)
        elif args.command == "train":
            experiments.run_train(cfg)
        elif args.command == "eval":
            report = experiments.run_eval(cfg)
            print(json.dumps({"median": report.median, "iqr": report.iqr}))
        elif args.command == "ablate":
            reports = experiments.run_ablate(cfg)
            print(json.dumps([{"value": r.extras.get("value"),
                               "median": r.median} for r in reports]))
        elif args.command == "ekf":
            summary = experiments.run_ekf_eval(cfg)
            print(json.dumps({"ekf_median": summary["ekf_median"],
                              "open_loop_median": summary["open_loop_median"],
                              "wins": summary["wins"]}))
        return EXIT_OK
    except PreconditionError as exc:
        log.error("precondition failed: %s", exc)
        return EXIT_PRECONDITION
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_MISSING
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (TrainingError, IntegrationError, FilterDivergenceError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
