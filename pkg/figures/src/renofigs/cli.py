"""render --spec fig.json — load a figure spec and draw it."""

import argparse
import sys

from .render import render
from .spec import SchemaError, load_spec


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="render", description="draw one figure from a JSON spec")
    parser.add_argument("--spec", required=True,
                        help="path to the figure spec (JSON)")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        out = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"render: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
