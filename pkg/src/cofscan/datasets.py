"""Generators for small, fully controlled biased datasets.

Both generators plant a known shortcut and write the ground truth needed
to verify the whole pipeline end to end: a color-keyed digit set where
the background color encodes the class, and a two-texture set where a
corner stamp marks a fraction of one class. Layout of every generated
dataset:

    images/<id>.png      8-bit RGB
    labels.csv           id,class
    annotations.json     id -> list of {label, mask, score}
    meta.json            generator parameters (palette / oracle settings)

Generation is deterministic for a given seed; per-image RNG streams are
derived from (seed, class, index) so image order never matters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidLabel, TemplateTooLarge
from .imagecore import PixelMask, RasterImage, rle_encode
from .segmenters import AnnotationStore, Segment

# Ten visually distinct background colors, one per digit class. Pure
# black is reserved for uncolored source pixels and pure grays for
# strokes, so every color here is off the gray diagonal.
DEFAULT_PALETTE_COLORS: tuple[tuple[int, int, int], ...] = (
    (255, 140, 0),
    (0, 100, 0),
    (255, 0, 0),
    (0, 255, 0),
    (138, 43, 226),
    (233, 150, 122),
    (0, 255, 255),
    (255, 255, 84),
    (100, 149, 237),
    (255, 20, 147),
)

WATERMARK_TEMPLATE: tuple[tuple[int, ...], ...] = (
    (1, 1, 0, 1, 0, 1, 1, 1, 0, 1, 0, 1),
    (1, 0, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1),
    (1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1),
    (1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0, 1),
)

CORNER_ORDER = ("top-left", "top-right", "bottom-left", "bottom-right")


@dataclass(frozen=True)
class ClassPalette:
    """Ordered background colors for digit classes 0-9."""

    colors: tuple[tuple[int, int, int], ...] = DEFAULT_PALETTE_COLORS

    def __post_init__(self):
        if len(self.colors) != 10:
            raise ValueError(f"palette needs 10 colors, got {len(self.colors)}")
        normalized = tuple(tuple(int(c) for c in color) for color in self.colors)
        if len(set(normalized)) != 10:
            raise ValueError("palette colors must be pairwise distinct")
        if (0, 0, 0) in normalized:
            raise ValueError("pure black is reserved for uncolored source pixels")
        object.__setattr__(self, "colors", normalized)

    def color_of(self, cls: str | int) -> tuple[int, int, int]:
        return self.colors[int(cls)]

    def next_class(self, cls: str | int) -> str:
        return str((int(cls) + 1) % 10)

    def color_to_class(self) -> dict[tuple[int, int, int], str]:
        return {color: str(i) for i, color in enumerate(self.colors)}

    def to_json_dict(self) -> dict:
        return {str(i): list(color) for i, color in enumerate(self.colors)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ClassPalette":
        colors = tuple(tuple(obj[str(i)]) for i in range(10))
        return cls(colors=colors)


@dataclass(frozen=True)
class WatermarkSpec:
    """Parameters of the planted corner-stamp shortcut."""

    template: tuple[tuple[int, ...], ...] = WATERMARK_TEMPLATE
    fraction: float = 0.1
    stratified: bool = False
    margin: int = 4
    stamp_color: tuple[int, int, int] = (255, 255, 255)
    image_size: int = 64

    def __post_init__(self):
        if not (0.0 <= self.fraction <= 1.0):
            raise ValueError(f"fraction must be in [0,1], got {self.fraction}")
        rows = tuple(tuple(int(v) for v in row) for row in self.template)
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("template must be a non-empty rectangular bitmap")
        if not any(v for row in rows for v in row):
            raise ValueError("template has no set pixel")
        object.__setattr__(self, "template", rows)

    @property
    def template_size(self) -> tuple[int, int]:
        return len(self.template[0]), len(self.template)

    def anchors(self) -> tuple[tuple[int, int], ...]:
        """Stamp origins for the four corners, honoring the margin."""
        tw, th = self.template_size
        size = self.image_size
        if 2 * self.margin + tw > size or 2 * self.margin + th > size:
            raise TemplateTooLarge(
                f"{tw}x{th} template with margin {self.margin} "
                f"does not fit a {size}x{size} image"
            )
        lo = self.margin
        hi_x = size - self.margin - tw
        hi_y = size - self.margin - th
        return ((lo, lo), (hi_x, lo), (lo, hi_y), (hi_x, hi_y))


@dataclass
class DatasetSummary:
    kind: str
    out_dir: Path
    image_count: int
    per_class: dict[str, int]
    watermarked: int = 0
    corner_counts: dict[str, int] = field(default_factory=dict)


class DatasetDir:
    """Read-side view of the generated dataset layout.

    Only ``images/`` is mandatory; labels, annotations and meta are
    optional extras that unlock ground-truth filters, the annotation
    segmenter, and palette/oracle resolution respectively.
    """

    def __init__(self, root: str | Path):
        from .errors import EmptyDataset

        self.root = Path(root)
        images_dir = self.root / "images"
        if not images_dir.is_dir():
            raise EmptyDataset(f"no images/ directory under {self.root}")
        self.image_ids = sorted(p.stem for p in images_dir.glob("*.png"))
        if not self.image_ids:
            raise EmptyDataset(f"no PNG images under {images_dir}")
        self.labels: dict[str, str] | None = None
        labels_path = self.root / "labels.csv"
        if labels_path.is_file():
            with open(labels_path, "r", encoding="utf-8", newline="") as fh:
                reader = csv.reader(fh)
                next(reader, None)  # header
                self.labels = {row[0]: row[1] for row in reader if len(row) >= 2}
        annotations = self.root / "annotations.json"
        self.annotations_path: Path | None = annotations if annotations.is_file() else None
        self.meta: dict | None = None
        meta_path = self.root / "meta.json"
        if meta_path.is_file():
            with open(meta_path, "r", encoding="utf-8") as fh:
                self.meta = json.load(fh)

    def image_path(self, image_id: str) -> Path:
        return self.root / "images" / f"{image_id}.png"

    def ground_truth(self, image_id: str) -> str | None:
        if self.labels is None:
            return None
        return self.labels.get(image_id)


def _write_dataset(
    out_dir: Path,
    images: dict[str, RasterImage],
    labels: dict[str, str],
    annotations: dict[str, list[Segment]],
    meta: dict,
) -> None:
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    for image_id in sorted(images):
        images[image_id].save(images_dir / f"{image_id}.png")
    with open(out_dir / "labels.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class"])
        for image_id in sorted(labels):
            writer.writerow([image_id, labels[image_id]])
    AnnotationStore.dump(annotations, out_dir / "annotations.json")
    with open(out_dir / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def synth_glyph(rng: np.random.Generator, size: int = 28) -> np.ndarray:
    """Random bright strokes on a black canvas, loosely digit-like.

    Strokes stay sparse so the background remains the dominant color by
    a wide margin, and stroke values stay >= 64 so no stroke pixel can be
    mistaken for uncolored background.
    """
    canvas = np.zeros((size, size), dtype=np.uint8)
    for _ in range(int(rng.integers(2, 5))):
        x = int(rng.integers(3, size - 3))
        y = int(rng.integers(3, size - 3))
        value = int(rng.integers(120, 256))
        dx = int(rng.integers(-1, 2))
        dy = int(rng.integers(-1, 2))
        for _ in range(int(rng.integers(8, 20))):
            shade = int(np.clip(value + int(rng.integers(-56, 1)), 64, 255))
            canvas[y, x] = shade
            if rng.random() < 0.5 and x + 1 < size:
                canvas[y, x + 1] = shade
            if rng.random() < 0.35:
                dx = int(rng.integers(-1, 2))
                dy = int(rng.integers(-1, 2))
            x = int(np.clip(x + dx, 1, size - 2))
            y = int(np.clip(y + dy, 1, size - 2))
    return canvas


def colorize_grayscale(gray: np.ndarray, color: tuple[int, int, int]) -> tuple[RasterImage, PixelMask]:
    """Replace exactly the zero pixels with ``color``; replicate the rest
    across channels. Returns the image and the mask of recolored pixels."""
    background = gray == 0
    rgb = np.repeat(gray[:, :, None], 3, axis=2).astype(np.uint8)
    rgb[background] = color
    return RasterImage(rgb), rle_encode(background)


def _load_source_images(source_dir: Path) -> list[tuple[str, np.ndarray, str]]:
    from PIL import Image

    labels: dict[str, str] = {}
    with open(source_dir / "labels.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "class"]:
            raise InvalidLabel(f"unexpected labels.csv header: {header}")
        for row in reader:
            labels[row[0]] = row[1]
    out = []
    for path in sorted((source_dir / "images").glob("*.png")):
        image_id = path.stem
        if image_id not in labels:
            raise InvalidLabel(f"no label for source image {image_id}")
        with Image.open(path) as im:
            if im.mode != "L":
                raise InvalidLabel(f"source image {image_id} is not single-channel")
            gray = np.asarray(im, dtype=np.uint8)
        out.append((image_id, gray, labels[image_id]))
    return out


def gen_colored_mnist(
    out_dir: str | Path,
    n_per_class: int = 100,
    palette: ClassPalette | None = None,
    source_dir: str | Path | None = None,
    seed: int = 0,
    size: int = 28,
) -> DatasetSummary:
    """Digit-like images whose background color leaks the class label."""
    out = Path(out_dir)
    palette = palette or ClassPalette()
    images: dict[str, RasterImage] = {}
    labels: dict[str, str] = {}
    annotations: dict[str, list[Segment]] = {}

    if source_dir is not None:
        sources = _load_source_images(Path(source_dir))
    else:
        sources = []
        for cls in range(10):
            for i in range(n_per_class):
                rng = np.random.default_rng([seed, cls, i])
                sources.append((f"{cls}_{i:04d}", synth_glyph(rng, size), str(cls)))

    per_class: dict[str, int] = {}
    for image_id, gray, cls in sources:
        if cls not in {str(d) for d in range(10)}:
            raise InvalidLabel(f"class {cls!r} for image {image_id}")
        image, background = colorize_grayscale(gray, palette.color_of(cls))
        images[image_id] = image
        labels[image_id] = cls
        annotations[image_id] = [
            Segment(label="background", mask=background, score=None, source="generator")
        ]
        per_class[cls] = per_class.get(cls, 0) + 1

    meta = {
        "kind": "colored-mnist",
        "palette": palette.to_json_dict(),
        "classes": [str(d) for d in range(10)],
        "seed": seed,
        "n_per_class": n_per_class,
    }
    _write_dataset(out, images, labels, annotations, meta)
    return DatasetSummary(
        kind="colored-mnist", out_dir=out, image_count=len(images), per_class=per_class
    )


def _texture(rng: np.random.Generator, size: int, mean: int) -> np.ndarray:
    gray = rng.integers(mean - 30, mean + 31, size=(size, size), dtype=np.int64)
    gray = np.clip(gray, 10, 245).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def gen_watermark_dataset(
    out_dir: str | Path,
    spec: WatermarkSpec | None = None,
    n_per_class: int = 500,
    seed: int = 0,
    classes: tuple[str, str] = ("class_a", "class_b"),
) -> DatasetSummary:
    """Two texture classes; a fraction of the first class gets a corner stamp.

    The first class renders dark (mean 70), the second light (mean 180),
    so a mean-intensity threshold of 125 separates them exactly. Stamped
    members of the first class render with the second class's texture:
    the stamp is the only signal that keeps the oracle classifier right
    on them, so removing it always flips the prediction. Stamp pixels
    are pure white, which the textures never reach, making the stamp
    detectable by exact match and removable by any non-white fill.
    Corner choice is uniform per stamp, or cycled round-robin when
    ``spec.stratified`` is set (counts then differ by at most one).
    """
    out = Path(out_dir)
    spec = spec or WatermarkSpec()
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    anchors = spec.anchors()
    template = np.asarray(spec.template, dtype=bool)
    th, tw = template.shape
    class_a, class_b = classes
    means = {class_a: 70, class_b: 180}

    images: dict[str, RasterImage] = {}
    labels: dict[str, str] = {}
    annotations: dict[str, list[Segment]] = {}

    n_watermarked = int(round(spec.fraction * n_per_class))
    pick_rng = np.random.default_rng([seed, 997])
    stamped_indices = set(
        int(i)
        for i in pick_rng.choice(n_per_class, size=n_watermarked, replace=False)
    )
    corner_rng = np.random.default_rng([seed, 998])
    corner_counts = {name: 0 for name in CORNER_ORDER}

    stamp_counter = 0
    for cls in (class_a, class_b):
        for i in range(n_per_class):
            image_id = f"{cls}_{i:04d}"
            rng = np.random.default_rng([seed, 0 if cls == class_a else 1, i])
            stamped = cls == class_a and i in stamped_indices
            # stamped first-class images get the OTHER texture: without the
            # stamp they look like the second class to the oracle
            texture_mean = means[class_b] if stamped else means[cls]
            rgb = _texture(rng, spec.image_size, texture_mean)
            segs: list[Segment] = []
            if stamped:
                if spec.stratified:
                    corner = stamp_counter % 4
                    stamp_counter += 1
                else:
                    corner = int(corner_rng.integers(0, 4))
                x, y = anchors[corner]
                rgb[y : y + th, x : x + tw][template] = spec.stamp_color
                grid = np.zeros((spec.image_size, spec.image_size), dtype=bool)
                grid[y : y + th, x : x + tw] = template
                segs.append(
                    Segment(
                        label="watermark",
                        mask=rle_encode(grid),
                        score=None,
                        source="generator",
                    )
                )
                corner_counts[CORNER_ORDER[corner]] += 1
            images[image_id] = RasterImage(rgb)
            labels[image_id] = cls
            annotations[image_id] = segs

    meta = {
        "kind": "watermark",
        "classes": [class_a, class_b],
        "shortcut_class": class_a,
        "template": [list(row) for row in spec.template],
        "anchors": [list(a) for a in anchors],
        "stamp_color": list(spec.stamp_color),
        "texture": {"threshold": 125.0, "low_class": class_a, "high_class": class_b},
        "fraction": spec.fraction,
        "stratified": spec.stratified,
        "n_per_class": n_per_class,
        "seed": seed,
        "watermarked": n_watermarked,
        "corner_counts": corner_counts,
    }
    _write_dataset(out, images, labels, annotations, meta)
    return DatasetSummary(
        kind="watermark",
        out_dir=out,
        image_count=len(images),
        per_class={class_a: n_per_class, class_b: n_per_class},
        watermarked=n_watermarked,
        corner_counts=corner_counts,
    )
