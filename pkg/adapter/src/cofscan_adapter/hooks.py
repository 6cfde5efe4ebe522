"""Bundled pure-arithmetic hooks.

These exist so the protocol can be driven end to end with zero model
dependencies: an exact-color-frequency classifier, a constant
classifier, copy/solid-fill infill, and a whole-image segmenter.
Real model hooks follow the same shape: request dict in, payload out.
"""

from __future__ import annotations

import shutil
from collections import Counter
from pathlib import Path

import numpy as np
from PIL import Image


def load_rgb(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def decode_mask(mask: dict) -> np.ndarray:
    """Expand {"width", "height", "runs"} into a boolean grid.

    Runs alternate zero-run / one-run over row-major order, starting
    with the count of leading zeros.
    """
    width, height, runs = int(mask["width"]), int(mask["height"]), mask["runs"]
    if sum(runs) != width * height:
        raise ValueError(f"runs sum to {sum(runs)}, expected {width * height}")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)


def dominant_color_classifier(palette: dict[tuple[int, int, int], str], fallback: str):
    """Most frequent palette color wins; ties go to the smallest RGB."""

    def classify(request: dict) -> dict:
        arr = load_rgb(request["image_path"])
        counter = Counter(map(tuple, arr.reshape(-1, 3).tolist()))
        candidates = [
            (count, color) for color, count in counter.items() if color in palette
        ]
        if not candidates:
            return {"class": fallback}
        candidates.sort(key=lambda item: (-item[0], item[1]))
        return {"class": palette[candidates[0][1]]}

    return classify


def constant_classifier(label: str):
    def classify(request: dict) -> dict:
        return {"class": label}

    return classify


def echo_infill(request: dict) -> dict:
    """Copy the input image to out_path unchanged (identity edit)."""
    out_path = request["out_path"]
    shutil.copyfile(request["image_path"], out_path)
    return {"out_path": out_path}


def solid_infill(color: tuple[int, int, int]):
    def infill(request: dict) -> dict:
        arr = load_rgb(request["image_path"]).copy()
        grid = decode_mask(request["mask"])
        arr[grid] = color
        out_path = request["out_path"]
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr, mode="RGB").save(out_path, format="PNG")
        return {"out_path": out_path}

    return infill


def full_image_segmenter(label: str = "everything"):
    """One segment covering the whole image."""

    def segment(request: dict) -> dict:
        arr = load_rgb(request["image_path"])
        height, width = arr.shape[:2]
        return {
            "segments": [
                {
                    "label": label,
                    "mask": {"width": width, "height": height, "runs": [0, width * height]},
                    "score": 1.0,
                }
            ]
        }

    return segment


def encode_mask(grid: np.ndarray) -> dict:
    """Boolean grid -> alternating run lengths, zero-run first."""
    flat = grid.ravel()
    runs: list[int] = []
    value = False
    length = 0
    for pixel in flat:
        if bool(pixel) == value:
            length += 1
        else:
            runs.append(length)
            value = not value
            length = 1
    runs.append(length)
    return {"width": grid.shape[1], "height": grid.shape[0], "runs": runs}


def dominant_color_segmenter(label: str = "background"):
    """Mask of every pixel equal to the most frequent exact color
    (ties to the smallest RGB)."""

    def segment(request: dict) -> dict:
        arr = load_rgb(request["image_path"])
        counter = Counter(map(tuple, arr.reshape(-1, 3).tolist()))
        ranked = sorted(counter.items(), key=lambda item: (-item[1], item[0]))
        top = np.asarray(ranked[0][0], dtype=np.uint8)
        grid = (arr == top).all(axis=2)
        return {"segments": [{"label": label, "mask": encode_mask(grid), "score": 1.0}]}

    return segment


def parse_hex(value: str) -> tuple[int, int, int]:
    if not value.startswith("#") or len(value) != 7:
        raise ValueError(f"expected #RRGGBB, got {value!r}")
    return tuple(int(value[i : i + 2], 16) for i in (1, 3, 5))
