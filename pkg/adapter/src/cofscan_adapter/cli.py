"""Command-line assembly of an adapter from the bundled hooks."""

from __future__ import annotations

import argparse
import json
import sys

from . import AdapterConfig, serve
from . import hooks


def build_config(argv=None) -> AdapterConfig:
    parser = argparse.ArgumentParser(
        prog="cofscan-adapter",
        description="Serve the cofscan tool protocol on stdin/stdout.",
    )
    parser.add_argument("--name", default="cofscan-adapter")
    parser.add_argument(
        "--classify",
        choices=["dominant-color", "constant"],
        default=None,
        help="expose a classify op",
    )
    parser.add_argument("--palette", default=None, help="JSON file mapping #RRGGBB -> class (dominant-color)")
    parser.add_argument("--fallback", default="unknown", help="class when no palette color is present")
    parser.add_argument("--label", default="fixed", help="class returned by the constant classifier")
    parser.add_argument(
        "--infill",
        choices=["echo", "solid"],
        default=None,
        help="expose an infill op",
    )
    parser.add_argument("--color", default="#00ff00", help="fill color for solid infill")
    parser.add_argument(
        "--segment",
        choices=["full-image", "dominant-color"],
        default=None,
        help="expose a segment op",
    )
    parser.add_argument("--segment-label", default=None)
    args = parser.parse_args(argv)

    config = AdapterConfig(name=args.name)
    if args.classify == "dominant-color":
        if not args.palette:
            parser.error("--classify dominant-color needs --palette")
        with open(args.palette, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        palette = {hooks.parse_hex(color): str(cls) for color, cls in raw.items()}
        config.hooks["classify"] = hooks.dominant_color_classifier(palette, args.fallback)
    elif args.classify == "constant":
        config.hooks["classify"] = hooks.constant_classifier(args.label)
    if args.infill == "echo":
        config.hooks["infill"] = hooks.echo_infill
    elif args.infill == "solid":
        config.hooks["infill"] = hooks.solid_infill(hooks.parse_hex(args.color))
    if args.segment == "full-image":
        config.hooks["segment"] = hooks.full_image_segmenter(args.segment_label or "everything")
    elif args.segment == "dominant-color":
        config.hooks["segment"] = hooks.dominant_color_segmenter(args.segment_label or "background")
    if not config.hooks:
        parser.error("nothing to expose: pass --classify, --infill, or --segment")
    return config


def main(argv=None) -> int:
    return serve(build_config(argv))


if __name__ == "__main__":
    sys.exit(main())
