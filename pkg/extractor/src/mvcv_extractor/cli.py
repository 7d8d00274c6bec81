"""Command line front end: extract --images DIR --archs a,b,c --out DIR --batch N."""

from __future__ import annotations

import argparse
import sys

from .extract import ARCHITECTURES, ExtractorConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvcv-extract",
        description="Extract penultimate-layer CNN features from an image folder, one view per architecture",
    )
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--archs", required=True,
                        help=f"comma-separated subset of {sorted(ARCHITECTURES)}")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--weights", choices=("imagenet", "random"), default="imagenet",
                        help="'random' builds seeded untrained networks (offline use)")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        config = ExtractorConfig(
            image_dir=args.images,
            architectures=tuple(a for a in args.archs.split(",") if a),
            output_dir=args.out,
            batch_size=args.batch,
            weights=args.weights,
            seed=args.seed,
        )
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        manifest = extract(config)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
