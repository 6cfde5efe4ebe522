"""Segmentation stage: produce labeled regions for an image.

Three sources are built in: an exact-color histogram rule, a stored
annotation lookup, and an external tool speaking the subprocess
protocol. Output ordering is always deterministic (label, then first
set pixel) so repeated runs serialize byte-for-byte identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DimensionMismatch, UnknownImage
from .imagecore import PixelMask, RasterImage, mask_complement, rle_encode

UNRECOGNISED_LABEL = "unrecognised"


@dataclass(frozen=True)
class Segment:
    """A mask with a semantic label and the id of whatever produced it."""

    label: str
    mask: PixelMask
    score: float | None = None
    source: str = ""

    def __post_init__(self):
        if not self.label:
            raise ValueError("segment label must be non-empty")
        if self.mask.area < 1:
            raise ValueError(f"segment {self.label!r} has an empty mask")

    def sort_key(self) -> tuple[str, int]:
        return (self.label, self.mask.first_set_index)


@dataclass(frozen=True)
class SegmentationOutput:
    image_id: str
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    @classmethod
    def build(cls, image_id: str, segments: Iterable[Segment]) -> "SegmentationOutput":
        """Canonical constructor: sorts segments by (label, first set pixel)."""
        ordered = tuple(sorted(segments, key=Segment.sort_key))
        return cls(image_id=image_id, segments=ordered)


def segment_dominant_color(image: RasterImage, image_id: str = "") -> SegmentationOutput:
    """One "background" segment covering every pixel of the most frequent
    exact RGB value; frequency ties go to the lexicographically smallest
    (R, G, B)."""
    flat = image.array.reshape(-1, 3)
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    # np.unique returns rows in lexicographic order, so the first argmax
    # hit is the smallest color among ties.
    top = colors[int(np.argmax(counts))]
    grid = (image.array == top).all(axis=2)
    segment = Segment(
        label="background",
        mask=rle_encode(grid),
        score=None,
        source="dominant_color",
    )
    return SegmentationOutput.build(image_id, [segment])


class AnnotationStore:
    """Ground-truth segments persisted by dataset generators.

    Backed by ``annotations.json``: image_id -> list of
    {"label": str, "mask": {"width", "height", "runs"}, "score": float|null}.
    """

    def __init__(self, entries: dict[str, list[Segment]]):
        self._entries = entries

    @classmethod
    def load(cls, path: str | Path) -> "AnnotationStore":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        entries: dict[str, list[Segment]] = {}
        for image_id, seg_list in raw.items():
            entries[image_id] = [
                Segment(
                    label=item["label"],
                    mask=PixelMask.from_json_dict(item["mask"]),
                    score=item.get("score"),
                    source="annotations",
                )
                for item in seg_list
            ]
        return cls(entries)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._entries

    def get(self, image_id: str) -> list[Segment]:
        if image_id not in self._entries:
            raise UnknownImage(image_id)
        return list(self._entries[image_id])

    @staticmethod
    def dump(entries: dict[str, list[Segment]], path: str | Path) -> None:
        payload = {
            image_id: [
                {
                    "label": seg.label,
                    "mask": seg.mask.to_json_dict(),
                    "score": seg.score,
                }
                for seg in segs
            ]
            for image_id, segs in sorted(entries.items())
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")


def segment_from_annotations(image_id: str, store: AnnotationStore) -> SegmentationOutput:
    """Return the stored segments verbatim, in canonical order."""
    return SegmentationOutput.build(image_id, store.get(image_id))


def segment_external(tool, image_path: str | Path, prompt: str | None = None) -> SegmentationOutput:
    """One protocol round trip; masks are validated against the image size."""
    from PIL import Image

    from . import toolproto

    with Image.open(image_path) as im:
        width, height = im.size
    image_id = Path(image_path).stem
    payload = toolproto.call_segment(tool, image_path, prompt=prompt)
    segments = []
    for item in payload:
        raw = item.get("mask") or {}
        # any mask that does not describe exactly this image's pixels is a
        # dimension problem, including run totals that disagree
        if sum(raw.get("runs", ())) != width * height:
            raise DimensionMismatch(
                f"mask covers {sum(raw.get('runs', ()))} pixels, image has {width * height}"
            )
        mask = PixelMask.from_json_dict(raw)
        if mask.width != width or mask.height != height:
            raise DimensionMismatch(
                f"segment mask is {mask.width}x{mask.height}, image is {width}x{height}"
            )
        segments.append(
            Segment(
                label=item["label"],
                mask=mask,
                score=item.get("score"),
                source=tool.name,
            )
        )
    return SegmentationOutput.build(image_id, segments)


def fill_unrecognised(
    output: SegmentationOutput, width: int, height: int
) -> SegmentationOutput:
    """Cover any pixels no segment claimed with one catch-all segment."""
    for seg in output.segments:
        if seg.mask.width != width or seg.mask.height != height:
            raise DimensionMismatch(
                f"segment {seg.label!r} is {seg.mask.width}x{seg.mask.height}, "
                f"expected {width}x{height}"
            )
    leftover = mask_complement([s.mask for s in output.segments], width, height)
    if leftover.area == 0:
        return output
    extra = Segment(
        label=UNRECOGNISED_LABEL, mask=leftover, score=None, source="complement"
    )
    return SegmentationOutput.build(output.image_id, list(output.segments) + [extra])
