"""Raster images, binary pixel masks, and mask geometry.

Images are always 8-bit RGB. Masks are stored run-length encoded over
row-major pixel order; the run list alternates 0-runs and 1-runs and
always starts with the count of leading zero pixels (possibly 0), so a
single canonical encoding exists for every bitmap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import DimensionMismatch, EmptyMask, MalformedRuns


class PositionBucket(str, Enum):
    """Quadrant of the image a mask centroid falls into."""

    TOP_LEFT = "top-left"
    TOP_RIGHT = "top-right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM_RIGHT = "bottom-right"


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Immutable 8-bit RGB image backed by a (height, width, 3) array."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected (h, w, 3) uint8 array, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    def to_bytes(self) -> bytes:
        """Row-major channel-interleaved buffer (len = w*h*3)."""
        return self.array.tobytes()

    def __eq__(self, other) -> bool:
        return isinstance(other, RasterImage) and np.array_equal(self.array, other.array)

    @classmethod
    def load(cls, path: str | Path) -> "RasterImage":
        """Read a PNG, forcing 8-bit RGB (grayscale replicated, alpha dropped)."""
        with Image.open(path) as im:
            if im.mode == "RGBA":
                # convert() would also work, but slicing makes "drop alpha" explicit
                arr = np.asarray(im, dtype=np.uint8)[:, :, :3]
                return cls(arr)
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))

    def save(self, path: str | Path) -> None:
        Image.fromarray(self.array, mode="RGB").save(path, format="PNG")

    def to_png_bytes(self) -> bytes:
        import io

        buf = io.BytesIO()
        Image.fromarray(self.array, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()


@dataclass(frozen=True)
class PixelMask:
    """Binary region stored as alternating 0/1 run lengths, 0-run first."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))

    def validate(self) -> None:
        """Raise MalformedRuns unless the run list describes width*height pixels."""
        if self.width < 1 or self.height < 1:
            raise MalformedRuns(f"bad dimensions {self.width}x{self.height}")
        if sum(self.runs) != self.width * self.height:
            raise MalformedRuns(
                f"runs sum to {sum(self.runs)}, expected {self.width * self.height}"
            )
        if any(r < 0 for r in self.runs):
            raise MalformedRuns("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise MalformedRuns("zero-length interior run")

    @property
    def area(self) -> int:
        """Number of set pixels."""
        return sum(self.runs[1::2])

    @property
    def first_set_index(self) -> int:
        """Row-major index of the first set pixel (leading 0-run length)."""
        if self.area == 0:
            raise EmptyMask("mask has no set pixel")
        return self.runs[0]

    def to_json_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "runs": list(self.runs)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PixelMask":
        try:
            mask = cls(int(obj["width"]), int(obj["height"]), tuple(obj["runs"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRuns(f"bad mask object: {exc}") from exc
        mask.validate()
        return mask


def rle_encode(bitmap) -> PixelMask:
    """Encode a row-major boolean grid into its canonical run list."""
    grid = np.asarray(bitmap, dtype=bool)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ValueError(f"expected a 2-D grid of at least 1x1, got shape {grid.shape}")
    flat = grid.ravel()
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(starts).tolist()
    if flat[0]:
        runs = [0] + runs
    return PixelMask(width=grid.shape[1], height=grid.shape[0], runs=tuple(runs))


def rle_decode(mask: PixelMask) -> np.ndarray:
    """Expand a mask back into a (height, width) boolean grid."""
    mask.validate()
    n = len(mask.runs)
    values = np.zeros(n, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(mask.runs, dtype=np.int64))
    return flat.reshape(mask.height, mask.width)


def mask_from_grid(bitmap) -> PixelMask:
    return rle_encode(bitmap)


def mask_centroid(mask: PixelMask) -> tuple[float, float]:
    """Mean position of set pixels, pixel centers, normalized to [0,1]^2.

    Origin is the top-left corner; x grows rightward, y downward.
    """
    grid = rle_decode(mask)
    ys, xs = np.nonzero(grid)
    if xs.size == 0:
        raise EmptyMask("centroid of an empty mask")
    cx = (float(xs.mean()) + 0.5) / mask.width
    cy = (float(ys.mean()) + 0.5) / mask.height
    return cx, cy


def position_bucket(centroid: tuple[float, float]) -> PositionBucket:
    """Vertical half then horizontal half; exactly 0.5 resolves top / left."""
    cx, cy = centroid
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise ValueError(f"centroid outside the unit square: ({cx}, {cy})")
    top = cy <= 0.5
    left = cx <= 0.5
    if top:
        return PositionBucket.TOP_LEFT if left else PositionBucket.TOP_RIGHT
    return PositionBucket.BOTTOM_LEFT if left else PositionBucket.BOTTOM_RIGHT


def mask_complement(masks: Sequence[PixelMask], width: int, height: int) -> PixelMask:
    """Mask of all pixels set in none of the inputs."""
    covered = np.zeros((height, width), dtype=bool)
    for m in masks:
        if m.width != width or m.height != height:
            raise DimensionMismatch(
                f"mask is {m.width}x{m.height}, expected {width}x{height}"
            )
        covered |= rle_decode(m)
    return rle_encode(~covered)


def tint_mask(
    image: RasterImage,
    mask: PixelMask,
    color: tuple[int, int, int] = (255, 0, 0),
    alpha: float = 0.5,
) -> RasterImage:
    """Blend ``color`` over the masked pixels (used for overlay rendering)."""
    if mask.width != image.width or mask.height != image.height:
        raise DimensionMismatch(
            f"mask is {mask.width}x{mask.height}, image is {image.width}x{image.height}"
        )
    grid = rle_decode(mask)
    out = image.array.astype(np.float64)
    out[grid] = out[grid] * (1.0 - alpha) + np.asarray(color, dtype=np.float64) * alpha
    return RasterImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def parse_hex_color(value: str) -> tuple[int, int, int]:
    if not (isinstance(value, str) and value.startswith("#") and len(value) == 7):
        raise ValueError(f"expected #RRGGBB color, got {value!r}")
    return tuple(int(value[i : i + 2], 16) for i in (1, 3, 5))


def format_hex_color(rgb) -> str:
    r, g, b = (int(c) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def default_blur_sigma(width: int, height: int) -> float:
    """Size-relative occlusion strength: max(w, h)/20, never below 2 px."""
    return max(max(width, height) / 20.0, 2.0)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized discrete Gaussian, truncated at radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()
