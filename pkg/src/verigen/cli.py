"""Command-line experiment harness.

    verigen analytic|simulate|bandit|sweep CONFIG.json [--seed S] [--trials T]
                                                       [--out PATH] [--format csv|jsonl]
    verigen compare BASE OTHER [OTHER ...] [--out PATH]

Exit status: 0 on success, 2 on a configuration or schema error, 3 on a
runtime error.  Data goes to --out (or stdout); logs go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import (
    EXPERIMENTS,
    FORMATS,
    ConfigError,
    SchemaError,
    compare,
    load_config,
    render_comparison,
    render_rows,
    run_experiment,
)

log = logging.getLogger("verigen")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="verigen", description="Best-of-N verifier selection experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} experiment from a JSON config")
        p.add_argument("config", help="JSON config file ('-' for stdin)")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int, help="trials (or episodes for bandit)")
        p.add_argument("--out", dest="output_path")
        p.add_argument("--format", choices=FORMATS)
        if name == "bandit":
            p.add_argument("--trace", help="write per-step episode traces as JSON lines")
    p = sub.add_parser("compare", help="align result files against the first one")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", dest="output_path")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _run(args) -> int:
    if args.command == "compare":
        rows = compare(args.files)
        _emit(render_comparison(rows), args.output_path)
        flagged = sum(r.significant for r in rows)
        log.info("compared %d rows, %d significant", len(rows), flagged)
        return EXIT_OK

    source = "<stdin>" if args.config == "-" else args.config
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {source}: {exc.strerror}") from None
    overrides = {"seed": args.seed, "trials": args.trials, "output_path": args.output_path, "format": args.format}
    cfg = load_config(text, source, experiment=args.command, overrides=overrides)
    trace = getattr(args, "trace", None)
    if trace:
        with open(trace, "w", encoding="utf-8", newline="") as sink:
            rows = run_experiment(cfg, trace_sink=sink)
    else:
        rows = run_experiment(cfg)
    _emit(render_rows(rows, cfg.format), cfg.output_path)
    log.info("wrote %d rows", len(rows))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return _run(args)
    except (ConfigError, SchemaError) as exc:
        print(f"verigen: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"verigen: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
