"""Run configuration: one JSON file describing a whole scan.

The file pins the dataset, the segmenter, the edit list, the classifier,
and the output directory; a copy is embedded verbatim in the run
manifest so any run can be reproduced exactly. The run id defaults to a
hash of the configuration, which keeps rescans of an unchanged config
byte-identical.

Component references are resolved here into runtime objects with a
uniform surface (segment/classify/apply + describe + close), including
process pools for external tools.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .classifiers import (
    ClassDecision,
    WatermarkOracleConfig,
    classify_dominant_color,
    classify_external,
    classify_watermark_oracle,
)
from .datasets import ClassPalette, DatasetDir
from .editors import (
    EditSpec,
    edit_external_infill,
    edit_gaussian_blur,
    edit_mean_fill,
    edit_solid_fill,
)
from .errors import ConfigError, EditFailed
from .imagecore import RasterImage, format_hex_color, parse_hex_color
from .segmenters import (
    AnnotationStore,
    SegmentationOutput,
    fill_unrecognised,
    segment_dominant_color,
    segment_external,
    segment_from_annotations,
)
from .toolproto import ToolPool


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    out_dir: Path
    segmenter: dict
    edits: tuple[EditSpec, ...]
    classifier: dict
    flips_only: bool = False
    workers: int = 1
    seed: int = 0
    run_id: str = ""
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path | None = None) -> "RunConfig":
        base = base_dir or Path.cwd()
        try:
            dataset = obj["dataset"]
            out_dir = obj["out_dir"]
            segmenter = obj["segmenter"]
            classifier = obj["classifier"]
            edits_raw = obj["edits"]
        except KeyError as exc:
            raise ConfigError(f"config missing required key {exc}") from exc
        if not isinstance(edits_raw, list) or not edits_raw:
            raise ConfigError("config needs a non-empty edits list")
        edits = []
        seen_ids = set()
        for entry in edits_raw:
            params = {k: v for k, v in entry.items() if k not in ("edit_id", "kind")}
            spec = EditSpec(edit_id=entry.get("edit_id", ""), kind=entry.get("kind", ""), params=params)
            if spec.edit_id in seen_ids:
                raise ConfigError(f"duplicate edit_id {spec.edit_id!r}")
            seen_ids.add(spec.edit_id)
            edits.append(spec)
        run_id = obj.get("run_id") or derive_run_id(obj)
        return cls(
            dataset=(base / dataset).resolve() if not Path(dataset).is_absolute() else Path(dataset),
            out_dir=(base / out_dir).resolve() if not Path(out_dir).is_absolute() else Path(out_dir),
            segmenter=dict(segmenter),
            edits=tuple(edits),
            classifier=dict(classifier),
            flips_only=bool(obj.get("flips_only", False)),
            workers=int(obj.get("workers", 1)),
            seed=int(obj.get("seed", 0)),
            run_id=run_id,
            raw=dict(obj),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj, base_dir=path.parent)


def derive_run_id(obj: dict) -> str:
    digest = hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return digest[:12]


# --------------------------------------------------------------------------
# Runtime components
# --------------------------------------------------------------------------


class SegmenterRuntime:
    kind = "base"

    def segment(self, image: RasterImage, image_id: str, image_path=None) -> SegmentationOutput:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}

    def tool_info(self) -> dict | None:
        return None

    def close(self):
        pass


class DominantColorSegmenter(SegmenterRuntime):
    kind = "dominant_color"

    def segment(self, image, image_id, image_path=None):
        return segment_dominant_color(image, image_id)


class AnnotationSegmenter(SegmenterRuntime):
    kind = "annotations"

    def __init__(self, store: AnnotationStore):
        self.store = store

    def segment(self, image, image_id, image_path=None):
        return segment_from_annotations(image_id, self.store)


class ExternalSegmenter(SegmenterRuntime):
    kind = "external"

    def __init__(self, pool: ToolPool, prompt: str | None = None):
        self.pool = pool
        self.prompt = prompt

    def segment(self, image, image_id, image_path=None):
        if image_path is None:
            raise ConfigError("external segmentation needs an image file path")
        output = segment_external(self.pool, image_path, prompt=self.prompt)
        return SegmentationOutput.build(image_id, output.segments)

    def describe(self):
        return {"kind": self.kind, "command": self.pool.command, "prompt": self.prompt}

    def tool_info(self):
        info = self.pool.info
        return {"name": info.name, "version": info.version, "deterministic": info.deterministic}

    def close(self):
        self.pool.close()


class CoveringSegmenter(SegmenterRuntime):
    """Wrapper that tops up any uncovered pixels with one catch-all segment."""

    kind = "covering"

    def __init__(self, inner: SegmenterRuntime):
        self.inner = inner

    def segment(self, image, image_id, image_path=None):
        output = self.inner.segment(image, image_id, image_path)
        return fill_unrecognised(output, image.width, image.height)

    def describe(self):
        desc = self.inner.describe()
        return {**desc, "fill_unrecognised": True}

    def tool_info(self):
        return self.inner.tool_info()

    def close(self):
        self.inner.close()


def build_segmenter(cfg: dict, dataset: DatasetDir) -> SegmenterRuntime:
    kind = cfg.get("kind")
    if kind == "dominant_color":
        seg: SegmenterRuntime = DominantColorSegmenter()
    elif kind == "annotations":
        if dataset.annotations_path is None:
            raise ConfigError("dataset has no annotations.json")
        seg = AnnotationSegmenter(AnnotationStore.load(dataset.annotations_path))
    elif kind == "external":
        command = cfg.get("command")
        if not command:
            raise ConfigError("external segmenter needs a command")
        pool = ToolPool(
            command,
            size=int(cfg.get("pool", 1)),
            call_timeout=float(cfg.get("timeout", 120.0)),
        )
        if "segment" not in pool.info.ops:
            pool.close()
            raise ConfigError(f"tool {pool.info.name!r} does not offer segmentation")
        seg = ExternalSegmenter(pool, prompt=cfg.get("prompt"))
    else:
        raise ConfigError(f"unknown segmenter kind {kind!r}")
    if cfg.get("fill_unrecognised"):
        seg = CoveringSegmenter(seg)
    return seg


class ClassifierRuntime:
    kind = "base"
    external = False

    def classify(self, image: RasterImage | None, image_path=None) -> ClassDecision:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}

    def tool_info(self) -> dict | None:
        return None

    def close(self):
        pass


class DominantColorClassifier(ClassifierRuntime):
    kind = "dominant_color_rule"

    def __init__(self, palette: dict[tuple[int, int, int], str], fallback: str):
        self.palette = palette
        self.fallback = fallback

    def classify(self, image, image_path=None):
        if image is None:
            image = RasterImage.load(image_path)
        return classify_dominant_color(image, self.palette, fallback=self.fallback)

    def describe(self):
        return {
            "kind": self.kind,
            "palette": {format_hex_color(color): cls for color, cls in sorted(self.palette.items())},
            "fallback": self.fallback,
        }


class WatermarkOracleClassifier(ClassifierRuntime):
    kind = "watermark_oracle"

    def __init__(self, oracle: WatermarkOracleConfig):
        self.oracle = oracle

    def classify(self, image, image_path=None):
        if image is None:
            image = RasterImage.load(image_path)
        return classify_watermark_oracle(image, self.oracle)

    def describe(self):
        return {"kind": self.kind, "shortcut_class": self.oracle.shortcut_class}


class ExternalClassifier(ClassifierRuntime):
    kind = "external"
    external = True

    def __init__(self, pool: ToolPool):
        self.pool = pool

    def classify(self, image, image_path=None):
        if image_path is None:
            raise ConfigError("external classification needs an image file path")
        return classify_external(self.pool, image_path)

    def describe(self):
        return {"kind": self.kind, "command": self.pool.command}

    def tool_info(self):
        info = self.pool.info
        return {"name": info.name, "version": info.version, "deterministic": info.deterministic}

    def close(self):
        self.pool.close()


def _hex(value: str) -> tuple[int, int, int]:
    try:
        return parse_hex_color(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _palette_from_cfg(cfg: dict, dataset: DatasetDir) -> dict[tuple[int, int, int], str]:
    if cfg.get("from_dataset"):
        meta = dataset.meta or {}
        if "palette" not in meta:
            raise ConfigError("dataset meta.json carries no palette")
        palette = ClassPalette.from_json_dict(meta["palette"])
        return palette.color_to_class()
    raw = cfg.get("palette")
    if not raw:
        raise ConfigError("dominant_color_rule needs a palette or from_dataset: true")
    return {_hex(color): str(cls) for color, cls in raw.items()}


def build_classifier(cfg: dict, dataset: DatasetDir) -> ClassifierRuntime:
    kind = cfg.get("kind")
    if kind == "dominant_color_rule":
        return DominantColorClassifier(
            _palette_from_cfg(cfg, dataset), fallback=str(cfg.get("fallback", "unknown"))
        )
    if kind == "watermark_oracle":
        if cfg.get("from_dataset"):
            meta = dataset.meta or {}
            if meta.get("kind") != "watermark":
                raise ConfigError("dataset meta.json carries no watermark oracle settings")
            oracle = WatermarkOracleConfig.from_json_dict(meta)
        else:
            oracle = WatermarkOracleConfig.from_json_dict(cfg)
        return WatermarkOracleClassifier(oracle)
    if kind == "external":
        command = cfg.get("command")
        if not command:
            raise ConfigError("external classifier needs a command")
        pool = ToolPool(
            command,
            size=int(cfg.get("pool", 1)),
            max_restarts=int(cfg.get("max_restarts", 2)),
            call_timeout=float(cfg.get("timeout", 120.0)),
        )
        if "classify" not in pool.info.ops:
            pool.close()
            raise ConfigError(f"tool {pool.info.name!r} does not offer classification")
        if not pool.info.deterministic:
            pool.close()
            raise ConfigError(
                f"tool {pool.info.name!r} declares deterministic=false; "
                "class-flip counterfactuals are undefined for nondeterministic models"
            )
        return ExternalClassifier(pool)
    raise ConfigError(f"unknown classifier kind {kind!r}")


class EditorRuntime:
    """One configured edit, applied per (image, mask) candidate."""

    persists_always = False

    def __init__(self, spec: EditSpec):
        self.spec = spec

    @property
    def edit_id(self) -> str:
        return self.spec.edit_id

    def apply(self, image, mask, *, image_path=None, out_path=None, original_class=None) -> RasterImage:
        raise NotImplementedError

    def tool_info(self) -> dict | None:
        return None

    def close(self):
        pass


class BlurEditor(EditorRuntime):
    def apply(self, image, mask, **ctx):
        sigma = self.spec.params.get("sigma")
        return edit_gaussian_blur(image, mask, None if sigma is None else float(sigma))


class SolidFillEditor(EditorRuntime):
    def __init__(self, spec: EditSpec, color: tuple[int, int, int]):
        super().__init__(spec)
        self.color = color

    def apply(self, image, mask, **ctx):
        return edit_solid_fill(image, mask, self.color)


class NextClassFillEditor(EditorRuntime):
    """Fills with the color of the class after the image's predicted one."""

    def __init__(self, spec: EditSpec, color_by_class: dict[str, tuple[int, int, int]]):
        super().__init__(spec)
        self.color_by_class = color_by_class

    def apply(self, image, mask, *, original_class=None, **ctx):
        color = self.color_by_class.get(str(original_class))
        if color is None:
            raise EditFailed(
                f"no successor color for predicted class {original_class!r}"
            )
        return edit_solid_fill(image, mask, color)


class MeanFillEditor(EditorRuntime):
    def apply(self, image, mask, **ctx):
        return edit_mean_fill(image, mask)


class InfillEditor(EditorRuntime):
    persists_always = True

    def __init__(self, spec: EditSpec, pool: ToolPool):
        super().__init__(spec)
        self.pool = pool

    def apply(self, image, mask, *, image_path=None, out_path=None, **ctx):
        if image_path is None or out_path is None:
            raise EditFailed("external infill needs source and output file paths")
        return edit_external_infill(
            self.pool, image_path, mask, out_path, prompt=self.spec.params.get("prompt")
        )

    def tool_info(self):
        info = self.pool.info
        return {"name": info.name, "version": info.version, "deterministic": info.deterministic}

    def close(self):
        self.pool.close()


def _next_class_colors(classifier_cfg: dict, dataset: DatasetDir) -> dict[str, tuple[int, int, int]]:
    """class -> fill color of its cyclic successor, from whatever palette
    the run has available (classifier config first, dataset meta second)."""
    if classifier_cfg.get("kind") == "dominant_color_rule" and classifier_cfg.get("palette"):
        color_to_class = {
            _hex(color): str(cls)
            for color, cls in classifier_cfg["palette"].items()
        }
        classes = sorted(set(color_to_class.values()))
        class_to_color: dict[str, tuple[int, int, int]] = {}
        for color, cls in sorted(color_to_class.items()):
            class_to_color.setdefault(cls, color)
        return {
            cls: class_to_color[classes[(i + 1) % len(classes)]]
            for i, cls in enumerate(classes)
        }
    meta = dataset.meta or {}
    if "palette" in meta:
        palette = ClassPalette.from_json_dict(meta["palette"])
        return {
            str(c): palette.color_of(palette.next_class(c)) for c in range(10)
        }
    raise ConfigError(
        'solid_fill color "next-class" needs a class palette '
        "(classifier palette or dataset meta.json)"
    )


def build_editors(
    edits: tuple[EditSpec, ...], classifier_cfg: dict, dataset: DatasetDir
) -> list[EditorRuntime]:
    editors: list[EditorRuntime] = []
    for spec in edits:
        if spec.kind == "gaussian_blur":
            editors.append(BlurEditor(spec))
        elif spec.kind == "mean_fill":
            editors.append(MeanFillEditor(spec))
        elif spec.kind == "solid_fill":
            color = spec.params["color"]
            if color == "next-class":
                editors.append(NextClassFillEditor(spec, _next_class_colors(classifier_cfg, dataset)))
            else:
                if isinstance(color, str):
                    color = _hex(color)
                editors.append(SolidFillEditor(spec, tuple(int(c) for c in color)))
        elif spec.kind == "external_infill":
            command = spec.params.get("command")
            if not command:
                raise ConfigError(f"edit {spec.edit_id!r}: external_infill needs a command")
            pool = ToolPool(
                command,
                size=int(spec.params.get("pool", 1)),
                call_timeout=float(spec.params.get("timeout", 120.0)),
            )
            if "infill" not in pool.info.ops:
                pool.close()
                raise ConfigError(f"tool {pool.info.name!r} does not offer infill")
            editors.append(InfillEditor(spec, pool))
        else:  # unreachable: EditSpec validates kind
            raise ConfigError(f"unknown edit kind {spec.kind!r}")
    return editors
