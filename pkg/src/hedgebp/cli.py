"""Command-line entry point.

    hedgebp run CONFIG.json
    hedgebp gen-stream STREAM.json OUT.csv
    hedgebp replicate {depth-dilemma,main-table,alpha-evolution,drift,depth-robustness}

Exit status: 0 on success, 1 when a config or spec fails validation, 2 when at
least one experiment (or the stream writer) fails at runtime.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import PRESETS, ConfigError, load_stream, load_suite, replicate, run_suite
from .streams import CsvFormatError, write_csv_stream

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("hedgebp")


def _report(rows) -> int:
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"FAILED {r['name']}: {r['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_run(args) -> int:
    try:
        suite = load_suite(args.config)
    except (ConfigError, OSError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    out = args.output_dir or suite.output_dir
    rows = run_suite(suite, out, args.parallelism)
    print(f"{len(rows)} experiment(s) written to {out}")
    return _report(rows)


def cmd_gen_stream(args) -> int:
    try:
        spec = load_stream(args.spec)
        if spec.csv is not None:
            raise ConfigError(["stream: gen-stream materializes synthetic streams; got a CSV source"])
    except (ConfigError, OSError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        n = write_csv_stream(spec, args.out, spec.input_dim)
    except (OSError, CsvFormatError) as exc:
        print(f"failed writing {args.out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


def cmd_replicate(args) -> int:
    out = args.output_dir or str(Path("results") / args.name)
    rows = replicate(args.name, out, length=args.length, parallelism=args.parallelism or 1)
    print(f"{args.name}: {len(rows)} experiment(s) written to {out}")
    return _report(rows)


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures, not runtime ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", help="directory for metrics files (overrides the config)")
    common.add_argument("--parallelism", type=int, help="worker processes for the suite runner")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])

    parser = _Parser(prog="hedgebp", description="Online deep learning with hedged backpropagation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run every experiment of a JSON suite config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-stream", parents=[common], help="write a synthetic stream spec to CSV")
    p.add_argument("spec")
    p.add_argument("out")
    p.set_defaults(func=cmd_gen_stream)

    p = sub.add_parser("replicate", parents=[common], help="run a desk-scale preset")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--length", type=int, help="shrink the preset streams to this many instances")
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.parallelism is not None and args.parallelism < 1:
        print("--parallelism must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
