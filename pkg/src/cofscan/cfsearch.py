"""Exhaustive single-segment counterfactual search over a dataset.

For every image: classify it once, then for each (segment, edit)
candidate apply the edit to the pristine original (edits never
compound), classify the result, and record one evaluation row. Rows for
every candidate are kept, flipped or not, because the per-image and
conditional table modes need segment presence counts; ``flips_only``
trades those modes away for smaller logs.

Run directory layout:

    evaluations.jsonl   one evaluation per line, canonical order
    manifest.json       config copy, per-image statuses, failures
    artifacts/<image_id>/<segment_index>_<edit_id>.png

The evaluations file is byte-identical across reruns of an unchanged
configuration: rows are sorted by (image_id, segment_index, edit_id)
before writing, and the run id is derived from the config.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .config import ClassifierRuntime, EditorRuntime, RunConfig, SegmenterRuntime, build_classifier, build_editors, build_segmenter
from .datasets import DatasetDir
from .errors import CofscanError, ToolError
from .imagecore import PositionBucket, RasterImage, mask_centroid, position_bucket

EVALUATION_KEYS = (
    "run_id",
    "image_id",
    "segment_index",
    "segment_label",
    "edit_id",
    "position",
    "area_frac",
    "original_class",
    "edited_class",
    "ground_truth",
    "flipped",
)


@dataclass(frozen=True)
class Evaluation:
    """One (image, segment, edit) trial and its outcome."""

    run_id: str
    image_id: str
    segment_index: int
    segment_label: str
    edit_id: str
    position: PositionBucket
    area_frac: float
    original_class: str
    edited_class: str
    ground_truth: str | None
    flipped: bool

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "image_id": self.image_id,
            "segment_index": self.segment_index,
            "segment_label": self.segment_label,
            "edit_id": self.edit_id,
            "position": self.position.value,
            "area_frac": self.area_frac,
            "original_class": self.original_class,
            "edited_class": self.edited_class,
            "ground_truth": self.ground_truth,
            "flipped": self.flipped,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Evaluation":
        return cls(
            run_id=obj.get("run_id", ""),
            image_id=obj["image_id"],
            segment_index=int(obj["segment_index"]),
            segment_label=obj["segment_label"],
            edit_id=obj["edit_id"],
            position=PositionBucket(obj["position"]),
            area_frac=float(obj["area_frac"]),
            original_class=obj["original_class"],
            edited_class=obj["edited_class"],
            ground_truth=obj.get("ground_truth"),
            flipped=bool(obj["flipped"]),
        )

    def sort_key(self):
        return (self.image_id, self.segment_index, self.edit_id)


@dataclass(frozen=True)
class CandidateFailure:
    image_id: str
    segment_index: int | None
    edit_id: str | None
    stage: str  # segmentation | classification | edit
    error: str

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "segment_index": self.segment_index,
            "edit_id": self.edit_id,
            "stage": self.stage,
            "error": self.error,
        }


@dataclass
class ImageScanResult:
    image_id: str
    status: str  # processed | skipped-no-segments | failed
    segment_count: int = 0
    evaluations: list[Evaluation] = field(default_factory=list)
    failures: list[CandidateFailure] = field(default_factory=list)
    error: str | None = None


def artifact_path(artifact_dir: Path, image_id: str, segment_index: int, edit_id: str) -> Path:
    return artifact_dir / image_id / f"{segment_index}_{edit_id}.png"


def scan_image(
    image: RasterImage,
    segmenter: SegmenterRuntime,
    editors: list[EditorRuntime],
    classifier: ClassifierRuntime,
    *,
    image_id: str,
    run_id: str = "",
    ground_truth: str | None = None,
    image_path: Path | None = None,
    artifact_dir: Path | None = None,
) -> ImageScanResult:
    """Evaluate every (segment, edit) candidate of one image.

    The original prediction is computed exactly once; each edit is
    applied to the unmodified original. Candidate-level errors become
    recorded failures, never exceptions. Edited images are persisted
    when they flip the class (generative infill results are kept
    unconditionally, for artifact review).
    """
    if not editors:
        raise ValueError("at least one edit is required")
    result = ImageScanResult(image_id=image_id, status="processed")
    try:
        segmentation = segmenter.segment(image, image_id, image_path)
    except Exception as exc:  # any failure in a pluggable stage degrades
        result.status = "failed"
        result.error = f"segmentation: {exc}"
        return result
    result.segment_count = len(segmentation.segments)
    if not segmentation.segments:
        result.status = "skipped-no-segments"
        return result
    try:
        original = classifier.classify(image, image_path)
    except Exception as exc:
        result.status = "failed"
        result.error = f"classification: {exc}"
        return result

    pixel_count = image.width * image.height
    for seg_index, segment in enumerate(segmentation.segments):
        position = position_bucket(mask_centroid(segment.mask))
        area_frac = segment.mask.area / pixel_count
        for editor in editors:
            out_path = None
            if artifact_dir is not None:
                out_path = artifact_path(artifact_dir, image_id, seg_index, editor.edit_id)
                out_path.parent.mkdir(parents=True, exist_ok=True)
            try:
                edited = editor.apply(
                    image,
                    segment.mask,
                    image_path=image_path,
                    out_path=out_path,
                    original_class=original.label,
                )
            except Exception as exc:
                result.failures.append(
                    CandidateFailure(image_id, seg_index, editor.edit_id, "edit", str(exc))
                )
                continue
            edited_path = None
            wrote_candidate = False
            if out_path is not None and editor.persists_always:
                edited_path = out_path
            elif out_path is not None and classifier.external:
                edited.save(out_path)
                edited_path = out_path
                wrote_candidate = True
            try:
                decision = classifier.classify(edited, edited_path)
            except Exception as exc:
                if wrote_candidate:
                    out_path.unlink(missing_ok=True)
                result.failures.append(
                    CandidateFailure(image_id, seg_index, editor.edit_id, "classification", str(exc))
                )
                continue
            flipped = decision.label != original.label
            if out_path is not None:
                if flipped and not (editor.persists_always or wrote_candidate):
                    edited.save(out_path)
                elif not flipped and wrote_candidate:
                    out_path.unlink(missing_ok=True)
            result.evaluations.append(
                Evaluation(
                    run_id=run_id,
                    image_id=image_id,
                    segment_index=seg_index,
                    segment_label=segment.label,
                    edit_id=editor.edit_id,
                    position=position,
                    area_frac=area_frac,
                    original_class=original.label,
                    edited_class=decision.label,
                    ground_truth=ground_truth,
                    flipped=flipped,
                )
            )
    return result


@dataclass
class ScanOutcome:
    run_dir: Path
    evaluations_path: Path
    manifest_path: Path
    manifest: dict

    @property
    def processed(self) -> int:
        return self.manifest["processed"]


def _verify_classifier_determinism(
    classifier: ClassifierRuntime,
    dataset: DatasetDir,
    results: list[ImageScanResult],
) -> None:
    """Re-classify a 1% sample of originals; any drift fails the run.

    A tool that died during the scan cannot be re-queried; those samples
    are skipped (the failures are already in the manifest).
    """
    processed = [r for r in results if r.status == "processed" and r.evaluations]
    sample = processed[::100] or processed[:1]
    for result in sample:
        recorded = result.evaluations[0].original_class
        try:
            decision = classifier.classify(None, dataset.image_path(result.image_id))
        except ToolError as exc:
            if exc.kind in ("unavailable", "crashed", "timeout"):
                continue
            raise
        if decision.label != recorded:
            raise ToolError(
                "nondeterministic",
                f"tool reclassified {result.image_id} as {decision.label!r}, "
                f"previously {recorded!r}",
            )


def scan_dataset(
    dataset_dir: str | Path, config: RunConfig, progress=None
) -> ScanOutcome:
    """Run the full search and persist evaluations + manifest.

    ``progress``, when given, is called as progress(done, total) after
    each image.
    """
    dataset = DatasetDir(dataset_dir)
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    artifact_dir = run_dir / "artifacts"
    artifact_dir.mkdir(exist_ok=True)

    segmenter = build_segmenter(config.segmenter, dataset)
    classifier = build_classifier(config.classifier, dataset)
    editors = build_editors(config.edits, config.classifier, dataset)

    def work(image_id: str) -> ImageScanResult:
        path = dataset.image_path(image_id)
        try:
            image = RasterImage.load(path)
        except Exception as exc:
            return ImageScanResult(image_id=image_id, status="failed", error=f"load: {exc}")
        return scan_image(
            image,
            segmenter,
            editors,
            classifier,
            image_id=image_id,
            run_id=config.run_id,
            ground_truth=dataset.ground_truth(image_id),
            image_path=path,
            artifact_dir=artifact_dir,
        )

    total = len(dataset.image_ids)
    done_counter = itertools.count(1)

    def tracked(image_id: str) -> ImageScanResult:
        result = work(image_id)
        if progress is not None:
            progress(next(done_counter), total)
        return result

    try:
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(tracked, dataset.image_ids))
        else:
            results = [tracked(image_id) for image_id in dataset.image_ids]
        if classifier.external:
            _verify_classifier_determinism(classifier, dataset, results)
    finally:
        segmenter.close()
        classifier.close()
        for editor in editors:
            editor.close()

    evaluations = sorted(
        (e for r in results for e in r.evaluations), key=Evaluation.sort_key
    )
    if config.flips_only:
        evaluations = [e for e in evaluations if e.flipped]

    evaluations_path = run_dir / "evaluations.jsonl"
    with open(evaluations_path, "w", encoding="utf-8", newline="\n") as fh:
        for evaluation in evaluations:
            fh.write(evaluation.to_json_line())
            fh.write("\n")

    statuses = {r.image_id: r for r in results}
    tool_versions = {}
    if segmenter.tool_info():
        tool_versions["segmenter"] = segmenter.tool_info()
    if classifier.tool_info():
        tool_versions["classifier"] = classifier.tool_info()
    for editor in editors:
        if editor.tool_info():
            tool_versions[f"edit:{editor.edit_id}"] = editor.tool_info()

    manifest = {
        "run_id": config.run_id,
        "dataset": str(config.dataset),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": config.raw,
        "segmenter": segmenter.describe(),
        "classifier": classifier.describe(),
        "edits": [
            {"edit_id": s.edit_id, "kind": s.kind, **{k: v for k, v in s.params.items() if k != "command"}}
            for s in config.edits
        ],
        "tool_versions": tool_versions,
        "flips_only": config.flips_only,
        "workers": config.workers,
        "seed": config.seed,
        "image_count": len(results),
        "processed": sum(1 for r in results if r.status == "processed"),
        "skipped_no_segments": sum(1 for r in results if r.status == "skipped-no-segments"),
        "failed": sum(1 for r in results if r.status == "failed"),
        "images": {
            r.image_id: {
                "status": r.status,
                "segments": r.segment_count,
                **({"error": r.error} if r.error else {}),
            }
            for r in sorted(results, key=lambda r: r.image_id)
        },
        "candidate_failures": [
            f.to_json_dict()
            for r in sorted(results, key=lambda r: r.image_id)
            for f in r.failures
        ],
        "evaluation_count": len(evaluations),
        "counterfactual_count": sum(1 for e in evaluations if e.flipped),
        "has_ground_truth": dataset.labels is not None,
    }
    manifest_path = run_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return ScanOutcome(
        run_dir=run_dir,
        evaluations_path=evaluations_path,
        manifest_path=manifest_path,
        manifest=manifest,
    )


def load_evaluations(path: str | Path) -> list[Evaluation]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(Evaluation.from_json_dict(json.loads(line)))
    return rows


@dataclass
class RunData:
    """A completed run loaded for aggregation and serving."""

    run_dir: Path
    evaluations: list[Evaluation]
    manifest: dict

    @property
    def run_id(self) -> str:
        return self.manifest.get("run_id", self.run_dir.name)

    @property
    def flips_only(self) -> bool:
        return bool(self.manifest.get("flips_only", False))

    @property
    def population(self) -> int:
        """Images eligible for per-image denominators: everything that was
        not lost to a hard failure (zero-segment images still count)."""
        return self.manifest["image_count"] - self.manifest.get("failed", 0)

    @property
    def has_ground_truth(self) -> bool:
        return bool(self.manifest.get("has_ground_truth", False))


def load_run(run_dir: str | Path) -> RunData:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    evaluations_path = run_dir / "evaluations.jsonl"
    if not manifest_path.is_file() or not evaluations_path.is_file():
        raise CofscanError(f"{run_dir} is not a completed run directory")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return RunData(
        run_dir=run_dir,
        evaluations=load_evaluations(evaluations_path),
        manifest=manifest,
    )
