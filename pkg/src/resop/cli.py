"""Command-line entry point.

    resop generate-data --config cfg.json --out runs/data
    resop fit-encoder   --config cfg.json --out runs/encoder
    resop train         --config cfg.json --out runs/train
    resop evaluate      --config cfg.json --out runs/eval
    resop bench-cost    --config cfg.json --out runs/bench
    resop preset --benchmark antiderivative --out cfg.json

Each command reads the experiment config, writes artifacts plus a manifest
under --out, and exits 0 on success. Failures print a JSON error object to
stderr and exit 1. --seed re-seeds every stage from one base value.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ResopError
from .harness import (ExperimentConfig, cmd_bench_cost, cmd_evaluate,
                      cmd_fit_encoder, cmd_generate_data, cmd_train, preset)

COMMANDS = {
    "generate-data": cmd_generate_data,
    "fit-encoder": cmd_fit_encoder,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "bench-cost": cmd_bench_cost,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resop", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, help="output run directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override all stage seeds from this base value")
    p = sub.add_parser("preset", help="write a full-scale benchmark config")
    p.add_argument("--benchmark", required=True,
                   choices=["antiderivative", "heat2d", "biot"])
    p.add_argument("--out", required=True, help="where to write the config JSON")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            preset(args.benchmark).save(args.out)
            print(json.dumps({"written": args.out}))
            return 0
        config = ExperimentConfig.load(args.config)
        if args.seed is not None:
            config = config.override_seed(args.seed)
        result = COMMANDS[args.command](config, args.out)
        print(json.dumps({"command": args.command, "out": args.out, "result": result},
                         default=str))
        return 0
    except (ResopError, OSError, ValueError, KeyError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
