"""Command line entry: `embed-extract extract`."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractError, extract
from .providers import ProviderConfig, make_provider
from .titles import parse_titles


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; keep 2 for data problems instead
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="embed-extract", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser(
        "extract",
        help="embed a titles (or queries) TSV into a binary matrix",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--titles", required=True, help="TSV of id<TAB>text rows")
    p.add_argument("--provider", required=True,
                   help="backend name, e.g. mock-hash or mock-hash:16")
    p.add_argument("--model", default="default", help="model name string")
    p.add_argument("--batch", type=int, default=64, help="texts per request")
    p.add_argument("--retries", type=int, default=3, help="retries per failed request")
    p.add_argument("--rate", type=float, default=0.0,
                   help="max requests per second (0 = unlimited)")
    p.add_argument("--concurrency", type=int, default=4, help="request workers")
    p.add_argument("--credentials", default="none", help="credentials source string")
    p.add_argument("--out", required=True, help="output matrix path")
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        config = ProviderConfig(
            provider=args.provider,
            model=args.model,
            batch_size=args.batch,
            max_retries=args.retries,
            rate_limit=args.rate,
            credentials=args.credentials,
        )
        provider = make_provider(config)
        table = parse_titles(args.titles)
        stats = extract(table, provider, config, args.out, concurrency=args.concurrency)
    except (ExtractError, ValueError, OSError) as exc:
        print(f"embed-extract: {exc}", file=sys.stderr)
        return 2
    print(
        f"{args.out}: {stats.rows_total} rows ({stats.rows_skipped} already done, "
        f"{stats.rows_embedded} embedded in {stats.provider_calls} requests), dim {stats.dim}"
    )
    return 0


def main() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))
