"""Command line front end: render one named figure from a result CSV."""

import argparse
import sys

from figrender.figures import FIGURE_NAMES, preset_spec, render
from figrender.reader import SchemaError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render a simulator result CSV as an errorbar line plot.",
    )
    parser.add_argument("--csv", required=True, help="input result CSV from the simulator harness")
    parser.add_argument(
        "--figure",
        required=True,
        choices=FIGURE_NAMES,
        help="figure preset, named after the harness sweep subcommands",
    )
    parser.add_argument("--out", required=True, help="output image path (.svg or .png)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        result = render(preset_spec(args.figure, args.csv, args.out))
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.output_path} ({len(result.series)} series, {result.rows_used} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
