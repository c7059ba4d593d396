"""Command-line entry point.

Subcommands map one-to-one onto the harness commands; ``--config`` points at
an INI file (flat key=value entries grouped in sections, see the README),
and ``--seed``, ``--out``, ``--threads`` override the corresponding [run]
keys. Exit code 0 means every requested artifact was written.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ValidationError
from .experiment import COMMANDS, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="upliftkit",
        description="Uplift modeling experiments: data generation, training, sweeps, allocation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        cmd = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        cmd.add_argument("--config", default=None, help="INI config file")
        cmd.add_argument("--seed", type=int, default=None, help="root seed override")
        cmd.add_argument("--out", default=None, help="output directory override")
        cmd.add_argument("--threads", type=int, default=None, help="worker pool size override")
        cmd.add_argument(
            "--methods",
            default=None,
            help="comma-separated method list override (s, t, x, drl)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = "config"
    try:
        methods = None
        if args.methods is not None:
            methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        cfg = load_config(
            args.config,
            seed=args.seed,
            out=args.out,
            threads=args.threads,
            methods=methods,
        )
        stage = args.command
        written = COMMANDS[args.command](cfg)
        for path in written:
            print(path)
        return 0
    except (ValidationError, OSError, RuntimeError) as exc:
        print(f"error in stage {stage!r}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
