"""Command-line entry point.

Subcommands: generate | run | verify | bench | serve. Every data command
takes `--config <file>` plus any number of `--set key=value` overrides; the
subcommand fixes the mode except `bench`, which reads mode=bench-s1|s2|s3
from the config. Exit codes: 0 success, 2 verification mismatch, 1
config/IO error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .datasets import DatasetError
from .studies import generate_mode, run_study


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mknn",
        description="batched k-NN queries over moving objects",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", metavar="FILE", help="key = value config file")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )

    p_gen = sub.add_parser("generate", help="write a synthetic dataset file")
    add_common(p_gen)
    p_run = sub.add_parser("run", help="process a workload and write results")
    add_common(p_run)
    p_run.add_argument("--server", metavar="URL", help="delegate ticks to a running service")
    p_ver = sub.add_parser("verify", help="run and compare against the brute-force oracle")
    add_common(p_ver)
    p_bench = sub.add_parser("bench", help="run a benchmark study (mode=bench-s1|s2|s3)")
    add_common(p_bench)
    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "generate":
            return generate_mode(cfg)
        if args.command == "run":
            cfg.mode = "run"
            if getattr(args, "server", None):
                cfg.server = args.server
        elif args.command == "verify":
            cfg.mode = "verify"
        elif args.command == "bench":
            if cfg.mode not in ("bench-s1", "bench-s2", "bench-s3"):
                raise ConfigError(
                    "bench requires mode=bench-s1|bench-s2|bench-s3 in the config"
                )
        return run_study(cfg)
    except (ConfigError, DatasetError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
