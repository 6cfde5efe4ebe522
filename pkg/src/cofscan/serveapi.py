"""Read-only HTTP API over completed runs.

Serves exactly what the library computes: table responses are the JSON
form of the cof module's output for the equivalent query, record pages
are slices of the canonical evaluation order, and image endpoints
stream dataset files and persisted artifacts byte for byte. Overlay
images are the only thing rendered on the fly (masks are recomputed
from the run's own segmenter config, which is deterministic).
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse

from . import cof
from .cfsearch import RunData, load_run
from .config import build_segmenter
from .datasets import DatasetDir
from .errors import CofscanError, FlipsOnlyLog, MissingGroundTruth
from .imagecore import RasterImage, tint_mask


class ServedRun:
    """One loaded run plus lazily built segmentation for overlays."""

    def __init__(self, run: RunData):
        self.run = run
        self._dataset: DatasetDir | None = None
        self._segmenter = None
        self._segment_cache: dict[str, object] = {}
        self._lock = threading.Lock()
        counted = len(run.evaluations)
        flips = sum(1 for e in run.evaluations if e.flipped)
        if counted != run.manifest.get("evaluation_count") or flips != run.manifest.get(
            "counterfactual_count"
        ):
            raise CofscanError(
                f"run {run.run_id}: manifest counts disagree with the evaluations file"
            )

    @property
    def dataset(self) -> DatasetDir:
        """The source dataset; only image endpoints need it, so a served run
        may legitimately outlive (or never have had) its dataset files."""
        if self._dataset is None:
            self._dataset = DatasetDir(self.run.manifest["dataset"])
        return self._dataset

    def summary(self) -> dict:
        run = self.run
        manifest = run.manifest
        return {
            "run_id": run.run_id,
            "image_count": manifest.get("image_count", 0),
            "evaluation_count": manifest.get("evaluation_count", 0),
            "counterfactual_count": manifest.get("counterfactual_count", 0),
            "classes": sorted({e.original_class for e in run.evaluations}),
            "labels": sorted({e.segment_label for e in run.evaluations}),
            "manifest": {
                "dataset": manifest.get("dataset"),
                "timestamp": manifest.get("timestamp"),
                "segmenter": manifest.get("segmenter"),
                "classifier": manifest.get("classifier"),
                "edits": manifest.get("edits"),
                "flips_only": run.flips_only,
                "has_ground_truth": run.has_ground_truth,
                "processed": manifest.get("processed"),
                "skipped_no_segments": manifest.get("skipped_no_segments"),
                "failed": manifest.get("failed"),
            },
        }

    def segments_of(self, image_id: str):
        with self._lock:
            if image_id in self._segment_cache:
                return self._segment_cache[image_id]
            if self._segmenter is None:
                self._segmenter = build_segmenter(
                    self.run.manifest["config"]["segmenter"], self.dataset
                )
            path = self.dataset.image_path(image_id)
            image = RasterImage.load(path)
            output = self._segmenter.segment(image, image_id, path)
            self._segment_cache[image_id] = output.segments
            return output.segments


def build_app(run_dirs: list[Path], ui_dir: Path | None = None) -> FastAPI:
    if not run_dirs:
        raise CofscanError("at least one run directory is required")
    served: dict[str, ServedRun] = {}
    for run_dir in run_dirs:
        run = ServedRun(load_run(run_dir))
        served[run.run.run_id] = run

    app = FastAPI(title="cofscan results", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
        expose_headers=["X-Total-Count"],
    )

    def get_run(run_id: str) -> ServedRun:
        if run_id not in served:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return served[run_id]

    @app.get("/api/runs")
    def list_runs():
        return [served[run_id].summary() for run_id in sorted(served)]

    @app.get("/api/runs/{run_id}/cof")
    def run_cof(
        run_id: str,
        mode: str = "share",
        class_: str | None = Query(default=None, alias="class"),
        position: str | None = None,
        edit_id: str | None = None,
        misclassified_only: bool = False,
        corrected_only: bool = False,
        min_support: int | None = None,
        min_frequency: float = 0.0,
        top_k: int | None = None,
        by_class: bool = False,
        by_position: str | None = None,
    ):
        target = get_run(run_id)
        if by_class and by_position:
            raise HTTPException(
                status_code=400,
                detail="by_class: mutually exclusive with by_position",
            )
        try:
            query = cof.CofQuery(
                mode=mode,
                class_filter=class_,
                position=position,
                edit_id=edit_id,
                misclassified_only=misclassified_only,
                corrected_only=corrected_only,
                min_support=min_support,
                min_frequency=min_frequency,
                top_k=top_k,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        run = target.run
        try:
            if by_class:
                tables = cof.cof_by_class(
                    run.evaluations,
                    query,
                    total_images=run.population,
                    flips_only=run.flips_only,
                )
                return cof.by_class_to_json_dict(tables)
            if by_position:
                table = cof.group_by_position(
                    run.evaluations,
                    by_position,
                    query,
                    total_images=run.population,
                    flips_only=run.flips_only,
                )
            else:
                table = cof.cof_table(
                    run.evaluations,
                    query,
                    total_images=run.population,
                    flips_only=run.flips_only,
                )
        except MissingGroundTruth as exc:
            name = "corrected_only" if corrected_only else "misclassified_only"
            raise HTTPException(status_code=400, detail=f"{name}: {exc}")
        except FlipsOnlyLog as exc:
            raise HTTPException(status_code=400, detail=f"mode: {exc}")
        return table.to_json_dict()

    @app.get("/api/runs/{run_id}/records")
    def run_records(
        run_id: str,
        label: str | None = None,
        position: str | None = None,
        class_: str | None = Query(default=None, alias="class"),
        flipped: bool | None = None,
        offset: int = 0,
        limit: int = 50,
    ):
        target = get_run(run_id)
        if offset < 0:
            raise HTTPException(status_code=400, detail="offset: must be >= 0")
        if not (1 <= limit <= 500):
            raise HTTPException(status_code=400, detail="limit: must be in 1..500")
        rows = target.run.evaluations
        if label is not None:
            rows = [e for e in rows if e.segment_label == label]
        if position is not None:
            rows = [e for e in rows if e.position.value == position]
        if class_ is not None:
            rows = [e for e in rows if e.original_class == class_]
        if flipped is not None:
            rows = [e for e in rows if e.flipped == flipped]
        total = len(rows)
        page = rows[offset : offset + limit]
        return JSONResponse(
            content={
                "total": total,
                "offset": offset,
                "limit": limit,
                "records": [e.to_json_dict() for e in page],
            },
            headers={"X-Total-Count": str(total)},
        )

    def _check_image(target: ServedRun, image_id: str) -> None:
        if image_id not in target.run.manifest.get("images", {}):
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")

    @app.get("/api/runs/{run_id}/images/{image_id}/original")
    def image_original(run_id: str, image_id: str):
        target = get_run(run_id)
        _check_image(target, image_id)
        try:
            path = target.dataset.image_path(image_id)
        except CofscanError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if not path.is_file():
            raise HTTPException(status_code=404, detail="dataset image missing")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/runs/{run_id}/images/{image_id}/overlay/{segment_index}")
    def image_overlay(run_id: str, image_id: str, segment_index: int):
        target = get_run(run_id)
        _check_image(target, image_id)
        try:
            segments = target.segments_of(image_id)
        except CofscanError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if not (0 <= segment_index < len(segments)):
            raise HTTPException(
                status_code=404, detail=f"no segment {segment_index} for {image_id!r}"
            )
        image = RasterImage.load(target.dataset.image_path(image_id))
        overlay = tint_mask(image, segments[segment_index].mask)
        return Response(content=overlay.to_png_bytes(), media_type="image/png")

    @app.get("/api/runs/{run_id}/images/{image_id}/edited/{segment_index}/{edit_id}")
    def image_edited(run_id: str, image_id: str, segment_index: int, edit_id: str):
        target = get_run(run_id)
        _check_image(target, image_id)
        path = target.run.run_dir / "artifacts" / image_id / f"{segment_index}_{edit_id}.png"
        if not path.is_file():
            raise HTTPException(
                status_code=404,
                detail="no persisted artifact for this candidate (only class flips are kept)",
            )
        return FileResponse(path, media_type="image/png")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
