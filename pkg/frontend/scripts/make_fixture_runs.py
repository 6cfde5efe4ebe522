#!/usr/bin/env python3
"""Build the two demo runs the explorer tests serve.

Run a1: color-keyed digits (100/class), background color shortcut.
Run a3: two-texture set (500/class), stratified corner watermark on 10%
of the first class.

Idempotent: skips work when the marker file is already present.
"""

import json
import sys
from pathlib import Path

from cofscan.cfsearch import scan_dataset
from cofscan.config import RunConfig
from cofscan.datasets import WatermarkSpec, gen_colored_mnist, gen_watermark_dataset

FIXTURES = Path(__file__).resolve().parent.parent / ".fixtures"
MARKER = FIXTURES / ".complete"


def build_a1() -> None:
    root = FIXTURES / "a1"
    gen_colored_mnist(root / "ds", n_per_class=100, seed=11)
    config = RunConfig.from_dict(
        {
            "run_id": "a1",
            "dataset": str(root / "ds"),
            "out_dir": str(root / "run"),
            "segmenter": {"kind": "dominant_color"},
            "classifier": {"kind": "dominant_color_rule", "from_dataset": True},
            "edits": [
                {"edit_id": "next-class-fill", "kind": "solid_fill", "color": "next-class"}
            ],
        }
    )
    outcome = scan_dataset(config.dataset, config)
    print(f"a1: {outcome.manifest['counterfactual_count']} counterfactuals")


def build_a3() -> None:
    root = FIXTURES / "a3"
    gen_watermark_dataset(
        root / "ds",
        spec=WatermarkSpec(fraction=0.10, stratified=True),
        n_per_class=500,
        seed=23,
    )
    config = RunConfig.from_dict(
        {
            "run_id": "a3",
            "dataset": str(root / "ds"),
            "out_dir": str(root / "run"),
            "segmenter": {"kind": "annotations"},
            "classifier": {"kind": "watermark_oracle", "from_dataset": True},
            "edits": [
                {"edit_id": "texture-fill", "kind": "solid_fill", "color": [180, 180, 180]}
            ],
        }
    )
    outcome = scan_dataset(config.dataset, config)
    print(f"a3: {outcome.manifest['counterfactual_count']} counterfactuals")


def build_nogt() -> None:
    """A small run whose dataset has no labels file, so every
    ground-truth-dependent control must be disabled."""
    root = FIXTURES / "nogt"
    gen_colored_mnist(root / "ds", n_per_class=1, seed=5)
    (root / "ds" / "labels.csv").unlink()
    config = RunConfig.from_dict(
        {
            "run_id": "nogt",
            "dataset": str(root / "ds"),
            "out_dir": str(root / "run"),
            "segmenter": {"kind": "dominant_color"},
            "classifier": {"kind": "dominant_color_rule", "from_dataset": True},
            "edits": [
                {"edit_id": "next-class-fill", "kind": "solid_fill", "color": "next-class"}
            ],
        }
    )
    scan_dataset(config.dataset, config)


def main() -> int:
    if MARKER.is_file():
        print("fixtures already built")
        return 0
    FIXTURES.mkdir(exist_ok=True)
    build_a1()
    build_a3()
    build_nogt()
    MARKER.write_text(json.dumps({"runs": ["a1", "a3", "nogt"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
