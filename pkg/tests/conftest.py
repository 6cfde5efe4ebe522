import json
import sys
from pathlib import Path

import numpy as np
import pytest

from cofscan.imagecore import PixelMask, RasterImage, rle_encode


def random_image(rng: np.random.Generator, width: int, height: int) -> RasterImage:
    return RasterImage(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def random_mask(
    rng: np.random.Generator, width: int, height: int, density: float = 0.4
) -> PixelMask:
    grid = rng.random((height, width)) < density
    return rle_encode(grid)


def nonempty_random_mask(rng, width, height, density=0.4) -> PixelMask:
    grid = rng.random((height, width)) < density
    if not grid.any():
        grid[rng.integers(0, height), rng.integers(0, width)] = True
    return rle_encode(grid)


def adapter_command(*args: str) -> list[str]:
    return [sys.executable, "-m", "cofscan_adapter", *args]


def make_fixture_run(run_dir: Path, rows: list[dict], total_images: int | None = None) -> Path:
    """Materialize a run directory from raw evaluation dicts."""
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "evaluations.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    ids = sorted({r["image_id"] for r in rows})
    image_count = total_images if total_images is not None else len(ids)
    manifest = {
        "run_id": rows[0]["run_id"] if rows else run_dir.name,
        "dataset": str(run_dir / "no-dataset"),
        "timestamp": "fixture",
        "config": {"segmenter": {"kind": "dominant_color"}},
        "segmenter": {"kind": "fixture"},
        "classifier": {"kind": "fixture"},
        "edits": sorted({r["edit_id"] for r in rows}),
        "tool_versions": {},
        "flips_only": False,
        "workers": 1,
        "seed": 0,
        "image_count": image_count,
        "processed": len(ids),
        "skipped_no_segments": max(0, image_count - len(ids)),
        "failed": 0,
        "images": {i: {"status": "processed", "segments": 1} for i in ids},
        "candidate_failures": [],
        "evaluation_count": len(rows),
        "counterfactual_count": sum(1 for r in rows if r["flipped"]),
        "has_ground_truth": any(r.get("ground_truth") is not None for r in rows),
    }
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return run_dir


def fixture_row(
    image_id="i0",
    label="thing",
    edit="e0",
    orig="a",
    edited="b",
    gt=None,
    pos="top-left",
    seg=0,
    area=0.5,
    run_id="fixture",
):
    return {
        "run_id": run_id,
        "image_id": image_id,
        "segment_index": seg,
        "segment_label": label,
        "edit_id": edit,
        "position": pos,
        "area_frac": area,
        "original_class": orig,
        "edited_class": edited,
        "ground_truth": gt,
        "flipped": edited != orig,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
