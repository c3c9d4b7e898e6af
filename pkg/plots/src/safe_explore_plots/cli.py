"""Batch figure rendering: ``plots <kind> --in <csv...> --out <png>``."""

from __future__ import annotations

import argparse
import sys

from .io import SchemaVersionError
from .render import FIGURE_KINDS, PlotSpec, render


def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from safe-explore run CSVs")
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("--in", dest="inputs", nargs="*", default=[],
                        help="input run CSVs (not needed for entropy-compare)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    parser.add_argument("--dpi", type=int, default=120)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        spec = PlotSpec(kind=args.kind, inputs=tuple(args.inputs), output=args.out,
                        title=args.title, dpi=args.dpi)
        result = render(spec)
    except (SchemaVersionError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result.path)
    return 0


def main() -> None:
    sys.exit(cli_main())
