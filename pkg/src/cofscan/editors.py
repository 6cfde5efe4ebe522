"""Edit stage: transform a masked region into a candidate counterfactual.

Built-in edits share one hard guarantee: every pixel outside the mask is
bit-identical to the input. External infill results carry no such
guarantee (generative models may touch anything), so they are always
kept on disk for manual review.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigError, DimensionMismatch, EmptyMask
from .imagecore import (
    PixelMask,
    RasterImage,
    default_blur_sigma,
    gaussian_kernel_1d,
    parse_hex_color,
    rle_decode,
)

EDIT_KINDS = ("gaussian_blur", "solid_fill", "mean_fill", "external_infill")


@dataclass(frozen=True)
class EditSpec:
    """Declarative description of one edit in a run configuration.

    params by kind:
      gaussian_blur   sigma: float (optional; defaults to max(w,h)/20, floor 2)
      solid_fill      color: [r, g, b] or the string "next-class"
      mean_fill       (none)
      external_infill command: [argv...], prompt: optional str
    """

    edit_id: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.edit_id:
            raise ConfigError("edit_id must be non-empty")
        if self.kind not in EDIT_KINDS:
            raise ConfigError(f"unknown edit kind {self.kind!r}")
        if self.kind == "gaussian_blur":
            sigma = self.params.get("sigma")
            if sigma is not None and not (float(sigma) > 0):
                raise ConfigError(f"sigma must be > 0, got {sigma}")
        if self.kind == "solid_fill":
            color = self.params.get("color")
            if color is None:
                raise ConfigError("solid_fill needs a color")
            if color != "next-class":
                _check_color(color)


def _check_color(color) -> tuple[int, int, int]:
    if isinstance(color, str):
        try:
            return parse_hex_color(color)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        r, g, b = (int(c) for c in color)
    except (TypeError, ValueError):
        raise ConfigError(f"bad RGB color {color!r}")
    if not all(0 <= c <= 255 for c in (r, g, b)):
        raise ConfigError(f"color components out of range: {color!r}")
    return r, g, b


def _check_mask(image: RasterImage, mask: PixelMask) -> np.ndarray:
    if mask.width != image.width or mask.height != image.height:
        raise DimensionMismatch(
            f"mask is {mask.width}x{mask.height}, image is {image.width}x{image.height}"
        )
    return rle_decode(mask)


def edit_gaussian_blur(
    image: RasterImage, mask: PixelMask, sigma: float | None = None
) -> RasterImage:
    """Blur the whole image, then composite the result into the mask only.

    The blur is separable with a normalized kernel truncated at radius
    ceil(3*sigma) and clamp-to-edge padding; blurring globally before
    compositing avoids halo artifacts at the mask boundary.
    """
    grid = _check_mask(image, mask)
    if sigma is None:
        sigma = default_blur_sigma(image.width, image.height)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not grid.any():
        return RasterImage(image.array.copy())
    kernel = gaussian_kernel_1d(sigma)
    blurred = image.array.astype(np.float64)
    blurred = correlate1d(blurred, kernel, axis=0, mode="nearest")
    blurred = correlate1d(blurred, kernel, axis=1, mode="nearest")
    blurred = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    out = image.array.copy()
    out[grid] = blurred[grid]
    return RasterImage(out)


def edit_solid_fill(image: RasterImage, mask: PixelMask, color) -> RasterImage:
    """Set every masked pixel to exactly ``color``."""
    grid = _check_mask(image, mask)
    rgb = _check_color(color)
    out = image.array.copy()
    out[grid] = rgb
    return RasterImage(out)


def edit_mean_fill(image: RasterImage, mask: PixelMask) -> RasterImage:
    """Replace the masked region with its own per-channel mean (half-up)."""
    grid = _check_mask(image, mask)
    if not grid.any():
        raise EmptyMask("mean fill needs at least one masked pixel")
    means = image.array[grid].astype(np.float64).mean(axis=0)
    fill = np.floor(means + 0.5).astype(np.uint8)
    out = image.array.copy()
    out[grid] = fill
    return RasterImage(out)


def edit_external_infill(
    tool,
    image_path: str | Path,
    mask: PixelMask,
    out_path: str | Path,
    prompt: str | None = None,
) -> RasterImage:
    """Ask an external tool to repaint the masked region.

    The tool writes its result to ``out_path``; the file stays on disk
    regardless of the classification outcome. Only the dimensions are
    validated — pixels outside the mask may legitimately change.
    """
    from . import toolproto

    original = RasterImage.load(image_path)
    _check_mask(original, mask)
    result_path = toolproto.call_infill(tool, image_path, mask, out_path, prompt=prompt)
    edited = RasterImage.load(result_path)
    if (edited.width, edited.height) != (original.width, original.height):
        raise DimensionMismatch(
            f"infill returned {edited.width}x{edited.height}, "
            f"expected {original.width}x{original.height}"
        )
    return edited
