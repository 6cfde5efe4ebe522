"""Classification stage: black-box image -> class decisions.

Two rule-based classifiers ship with the engine. They exist so the full
pipeline can be exercised and verified without any trained model: the
exact-color rule is the decision function a model trained on a
color-keyed dataset converges to, and the watermark oracle reproduces
the stamped-shortcut behavior of a biased binary classifier. Real
models attach through the external tool protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ToolError
from .imagecore import RasterImage


@dataclass(frozen=True)
class ClassDecision:
    """Predicted class, optionally with raw per-class scores."""

    label: str
    scores: dict[str, float] | None = None

    def __post_init__(self):
        if not self.label:
            raise ValueError("decision label must be non-empty")
        if self.scores:
            best = max(self.scores.values())
            winners = sorted(c for c, s in self.scores.items() if s == best)
            if self.label != winners[0]:
                raise ValueError(
                    f"label {self.label!r} does not attain the maximum score "
                    f"(expected {winners[0]!r})"
                )

    @classmethod
    def from_scores(cls, scores: Mapping[str, float]) -> "ClassDecision":
        best = max(scores.values())
        label = sorted(c for c, s in scores.items() if s == best)[0]
        return cls(label=label, scores=dict(scores))


def classify_dominant_color(
    image: RasterImage,
    palette: Mapping[tuple[int, int, int], str],
    fallback: str = "unknown",
) -> ClassDecision:
    """Class of the most frequent palette color in the image.

    Pixels whose exact RGB is not a palette key are ignored; if none
    match, the fallback class is returned. Frequency ties resolve to the
    lexicographically smallest (R, G, B), mirroring the segmentation rule.
    """
    if not palette:
        raise ValueError("palette must be non-empty")
    flat = image.array.reshape(-1, 3)
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    best_color = None
    best_count = 0
    for color, count in zip(colors, counts):
        key = (int(color[0]), int(color[1]), int(color[2]))
        if key in palette and count > best_count:
            best_color, best_count = key, count
    if best_color is None:
        return ClassDecision(label=fallback)
    return ClassDecision(label=palette[best_color])


@dataclass(frozen=True)
class WatermarkOracleConfig:
    """Everything the oracle needs to detect a stamp exactly.

    ``template`` is a small binary bitmap; a stamp is present when every
    template-set pixel equals ``stamp_color`` at one of the anchors.
    When no stamp is found, mean image intensity against ``threshold``
    decides between the two texture classes.
    """

    template: tuple[tuple[int, ...], ...]
    anchors: tuple[tuple[int, int], ...]
    stamp_color: tuple[int, int, int]
    shortcut_class: str
    threshold: float
    low_class: str
    high_class: str

    @classmethod
    def from_json_dict(cls, obj: dict) -> "WatermarkOracleConfig":
        return cls(
            template=tuple(tuple(int(v) for v in row) for row in obj["template"]),
            anchors=tuple((int(x), int(y)) for x, y in obj["anchors"]),
            stamp_color=tuple(int(c) for c in obj["stamp_color"]),
            shortcut_class=obj["shortcut_class"],
            threshold=float(obj["texture"]["threshold"]),
            low_class=obj["texture"]["low_class"],
            high_class=obj["texture"]["high_class"],
        )


def classify_watermark_oracle(
    image: RasterImage, config: WatermarkOracleConfig
) -> ClassDecision:
    """Shortcut class if the stamp template matches at any anchor,
    otherwise the mean-intensity texture rule."""
    template = np.asarray(config.template, dtype=bool)
    th, tw = template.shape
    if th > image.height or tw > image.width:
        raise ValueError("template larger than image")
    stamp = np.asarray(config.stamp_color, dtype=np.uint8)
    for x, y in config.anchors:
        if x < 0 or y < 0 or x + tw > image.width or y + th > image.height:
            continue
        region = image.array[y : y + th, x : x + tw]
        if (region[template] == stamp).all():
            return ClassDecision(label=config.shortcut_class)
    mean_intensity = float(image.array.mean())
    label = config.low_class if mean_intensity < config.threshold else config.high_class
    return ClassDecision(label=label)


def classify_external(tool, image_path: str | Path) -> ClassDecision:
    """One protocol round trip; the payload is validated before use."""
    from . import toolproto

    payload = toolproto.call_classify(tool, image_path)
    label = payload.get("class")
    if not label or not isinstance(label, str):
        raise ToolError("malformed", f"classify payload missing class: {payload!r}")
    scores = payload.get("scores")
    if scores is not None:
        try:
            decision = ClassDecision(label=label, scores={str(k): float(v) for k, v in scores.items()})
        except (TypeError, ValueError) as exc:
            raise ToolError("malformed", f"inconsistent scores: {exc}") from exc
        return decision
    return ClassDecision(label=label)
