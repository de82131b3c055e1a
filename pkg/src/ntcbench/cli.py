"""Command-line interface.

Subcommands: ``run`` (score matrix to CSV, optionally SVG), ``dump-protocol``
(JSON plus a plain-text table), ``tre-ablation`` (reconstruction error across
composition functions) and ``grad-check``.  Exit codes: 0 success, 1 usage or
configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import protocol_to_json
from .harness import ALL_METRICS, RunConfig, emit_csv, emit_notes, emit_plot, run_matrix
from .protocols import FAMILIES, format_table, make_protocol
from .tre import COMPOSITIONS, GRAD_CHECK_TOLERANCES, grad_check


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 instead of argparse's 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ntc-bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate the protocol x metric matrix")
    _add_matrix_args(run)
    run.add_argument("--metrics", nargs="+", default=None, help=f"subset of {', '.join(ALL_METRICS)}")
    run.add_argument("--config", default=None, help="JSON file mirroring the run configuration")

    dump = sub.add_parser("dump-protocol", help="write one protocol table as JSON and text")
    dump.add_argument("name", choices=sorted(FAMILIES))
    dump.add_argument("--colours", type=int, default=25)
    dump.add_argument("--shapes", type=int, default=25)
    dump.add_argument("--seed", type=int, default=0)
    dump.add_argument("--out", default=None, help="JSON path (stdout when omitted)")
    dump.add_argument("--table", default=None, help="text-table path")

    ablation = sub.add_parser("tre-ablation", help="reconstruction error across compositions")
    _add_matrix_args(ablation, default_compositions=list(COMPOSITIONS))

    check = sub.add_parser("grad-check", help="verify analytic gradients against finite differences")
    check.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    return parser


def _add_matrix_args(sub: argparse.ArgumentParser, default_compositions: list[str] | None = None) -> None:
    sub.add_argument("--protocols", nargs="+", default=None, help=f"subset of {', '.join(FAMILIES)}")
    sub.add_argument("--colours", type=int, default=None)
    sub.add_argument("--shapes", type=int, default=None)
    sub.add_argument("--seeds", nargs="+", type=int, default=None)
    sub.add_argument(
        "--compositions", nargs="+",
        default=default_compositions, help=f"subset of {', '.join(COMPOSITIONS)}",
    )
    sub.add_argument("--out", default=None, help="CSV output path")
    sub.add_argument("--plot", default=None, help="SVG output path")


def _matrix_config(args: argparse.Namespace, metrics: tuple[str, ...] | None) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
    overrides = {
        "protocols": tuple(args.protocols) if args.protocols else None,
        "metrics": metrics,
        "n_colours": args.colours,
        "n_shapes": args.shapes,
        "seeds": tuple(args.seeds) if args.seeds else None,
        "tre_compositions": tuple(args.compositions) if args.compositions else None,
        "out": args.out,
        "plot": args.plot,
    }
    return RunConfig.from_json(base, **overrides)


def _run_matrix_command(config: RunConfig) -> int:
    if config.out is None:
        raise ValueError("--out is required (CSV output path)")
    table = run_matrix(config)
    emit_csv(table, config.out)
    emit_notes(table, config.out + ".notes")
    if config.plot:
        emit_plot(table, config.plot)
    print(f"wrote {len(table.rows)} rows to {config.out}")
    return 0


def _dump_protocol_command(args: argparse.Namespace) -> int:
    protocol, notes = make_protocol(args.name, args.colours, args.shapes, args.seed)
    payload = protocol_to_json(protocol)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    text = format_table(protocol)
    if args.table:
        with open(args.table, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    elif args.out:
        sys.stdout.write(text)
    for note in notes:
        print(f"note: {note}", file=sys.stderr)
    return 0


def _grad_check_command(args: argparse.Namespace) -> int:
    worst = 0.0
    failed = False
    for kind in COMPOSITIONS:
        tolerance = GRAD_CHECK_TOLERANCES[kind]
        for seed in args.seeds:
            err = grad_check(kind, seed)
            worst = max(worst, err / tolerance)
            status = "ok" if err < tolerance else "FAIL"
            failed = failed or err >= tolerance
            print(f"{kind:9s} seed={seed} max_rel_err={err:.3e} tol={tolerance:.0e} {status}")
    if failed:
        print("gradient check failed", file=sys.stderr)
        return 2
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1

    try:
        if args.command == "run":
            metrics = tuple(args.metrics) if args.metrics else None
            config = _matrix_config(args, metrics)
        elif args.command == "tre-ablation":
            config = _matrix_config(args, ("tre",))
        elif args.command == "dump-protocol":
            if args.colours < 1 or args.shapes < 1 or args.seed < 0:
                raise ValueError("sizes must be positive and the seed non-negative")
            config = None
        else:
            config = None
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command in ("run", "tre-ablation"):
            return _run_matrix_command(config)
        if args.command == "dump-protocol":
            return _dump_protocol_command(args)
        if args.command == "grad-check":
            return _grad_check_command(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
