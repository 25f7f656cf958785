"""CLI: ``zoo-export export --model <id> --out <path> [--weights <pth>]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .export import MODELS, ModelUnavailable, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="zoo-export",
        description="Export model-zoo checkpoints as WeightBundle files")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export")
    p.add_argument("--model", required=True, choices=sorted(MODELS))
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None,
                   help="local state-dict .pth instead of a zoo download")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        count = export(args.model, args.out, args.weights)
    except ModelUnavailable as e:
        print(f"model unavailable: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    print(f"exported {count} layers of {args.model} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
