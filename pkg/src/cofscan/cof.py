"""Counterfactual frequency tables over an evaluation log.

Published result tables use "frequency" with at least three different
denominators, so every table here carries an explicit mode instead of
one blessed meaning:

    counts       raw number of class flips per segment label
    share        flips for the label / all flips found
    per_image    images where the label flipped at least once / all
                 images in scope
    conditional  images where the label flipped / images containing the
                 label at all ("when this segment is present, how often
                 does editing it flip the class?")

Shared semantics, also implemented independently by the recount oracle
in the test suite:

* F = rows surviving every active filter. Filters: class (original
  prediction), position bucket, edit id, misclassified_only (original
  != ground truth), corrected_only (flipped, original != ground truth,
  edited == ground truth). Rows without ground truth never pass a
  ground-truth filter; if a ground-truth filter is requested and no row
  carries ground truth at all, MissingGroundTruth is raised.
* count(l), flip-image and support sets are computed over F; an image
  "contains" a label when any surviving row carries it, and "flips on"
  a label when a surviving flipped row carries it.
* The per-image denominator is the number of images in scope: every
  non-failed image of the run when no image-narrowing filter (class,
  misclassified_only, corrected_only) is active, otherwise the distinct
  images with at least one row surviving those image-narrowing filters
  alone (position and edit id never shrink the image population).
* Rows are all labels present in F. min_support drops rows whose
  support is below the threshold (default 20 in conditional mode, 0
  elsewhere); min_frequency compares against full-precision
  frequencies; top_k truncates after sorting. Sort order is frequency
  descending, then label ascending.

Display rounding (the one-decimal percent of the text renderer) never
feeds back into any threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .cfsearch import Evaluation
from .errors import FlipsOnlyLog, MissingGroundTruth
from .imagecore import PositionBucket

MODES = ("counts", "share", "per_image", "conditional")
CONDITIONAL_DEFAULT_MIN_SUPPORT = 20


@dataclass(frozen=True)
class CofQuery:
    mode: str = "share"
    class_filter: str | None = None
    position: str | None = None
    edit_id: str | None = None
    misclassified_only: bool = False
    corrected_only: bool = False
    min_support: int | None = None
    min_frequency: float = 0.0
    top_k: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.position is not None:
            # normalizes and validates the bucket name
            object.__setattr__(self, "position", PositionBucket(self.position).value)
        if self.min_support is not None and self.min_support < 0:
            raise ValueError("min_support must be >= 0")
        if not (0.0 <= self.min_frequency <= 1.0):
            raise ValueError("min_frequency must be in [0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    @property
    def effective_min_support(self) -> int:
        if self.min_support is not None:
            return self.min_support
        return CONDITIONAL_DEFAULT_MIN_SUPPORT if self.mode == "conditional" else 0

    def narrows_images(self) -> bool:
        return (
            self.class_filter is not None
            or self.misclassified_only
            or self.corrected_only
        )

    def needs_ground_truth(self) -> bool:
        return self.misclassified_only or self.corrected_only

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "class": self.class_filter,
            "position": self.position,
            "edit_id": self.edit_id,
            "misclassified_only": self.misclassified_only,
            "corrected_only": self.corrected_only,
            "min_support": self.min_support,
            "min_frequency": self.min_frequency,
            "top_k": self.top_k,
        }


@dataclass(frozen=True)
class CofRow:
    label: str
    count: int
    frequency: float
    support: int


@dataclass(frozen=True)
class CofTable:
    mode: str
    rows: tuple[CofRow, ...]
    total_counterfactuals: int
    total_images: int
    query: CofQuery

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rows": [
                {
                    "label": r.label,
                    "count": r.count,
                    "frequency": r.frequency,
                    "support": r.support,
                }
                for r in self.rows
            ],
            "total_counterfactuals": self.total_counterfactuals,
            "total_images": self.total_images,
            "query": self.query.to_json_dict(),
        }


def _passes_image_filters(e: Evaluation, query: CofQuery) -> bool:
    if query.class_filter is not None and e.original_class != query.class_filter:
        return False
    if query.misclassified_only:
        if e.ground_truth is None or e.original_class == e.ground_truth:
            return False
    if query.corrected_only:
        if (
            not e.flipped
            or e.ground_truth is None
            or e.original_class == e.ground_truth
            or e.edited_class != e.ground_truth
        ):
            return False
    return True


def _passes_row_filters(e: Evaluation, query: CofQuery) -> bool:
    if not _passes_image_filters(e, query):
        return False
    if query.position is not None and e.position.value != query.position:
        return False
    if query.edit_id is not None and e.edit_id != query.edit_id:
        return False
    return True


def _check_ground_truth(evaluations: Sequence[Evaluation], query: CofQuery) -> None:
    if query.needs_ground_truth() and evaluations:
        if all(e.ground_truth is None for e in evaluations):
            raise MissingGroundTruth(
                "ground-truth filter requested but the log has no ground truth"
            )


def apply_row_filters(
    evaluations: Sequence[Evaluation], query: CofQuery
) -> list[Evaluation]:
    """Rows surviving every active filter (set-intersection semantics,
    so composition order never matters)."""
    _check_ground_truth(evaluations, query)
    return [e for e in evaluations if _passes_row_filters(e, query)]


def _population(
    evaluations: Sequence[Evaluation], query: CofQuery, total_images: int | None
) -> int:
    if not query.narrows_images():
        if total_images is not None:
            return total_images
        return len({e.image_id for e in evaluations})
    return len(
        {e.image_id for e in evaluations if _passes_image_filters(e, query)}
    )


def _finish_rows(
    rows: Iterable[CofRow], query: CofQuery
) -> tuple[CofRow, ...]:
    kept = [
        r
        for r in rows
        if r.support >= query.effective_min_support
        and r.frequency >= query.min_frequency
    ]
    kept.sort(key=lambda r: (-r.frequency, r.label))
    if query.top_k is not None:
        kept = kept[: query.top_k]
    return tuple(kept)


def _build_table(
    evaluations: Sequence[Evaluation],
    query: CofQuery,
    total_images: int | None,
    flips_only: bool,
) -> CofTable:
    if query.mode in ("per_image", "conditional") and flips_only:
        raise FlipsOnlyLog(
            f"{query.mode} tables need the full log; this run recorded flips only"
        )
    filtered = apply_row_filters(evaluations, query)
    flips = [e for e in filtered if e.flipped]

    counts: dict[str, int] = {}
    support_images: dict[str, set[str]] = {}
    flip_images: dict[str, set[str]] = {}
    for e in filtered:
        support_images.setdefault(e.segment_label, set()).add(e.image_id)
    for e in flips:
        counts[e.segment_label] = counts.get(e.segment_label, 0) + 1
        flip_images.setdefault(e.segment_label, set()).add(e.image_id)

    population = _population(evaluations, query, total_images)
    total_flips = len(flips)

    rows = []
    for label in support_images:
        count = counts.get(label, 0)
        support = len(support_images[label])
        if query.mode == "counts":
            frequency = float(count)
        elif query.mode == "share":
            frequency = count / total_flips if total_flips else 0.0
        elif query.mode == "per_image":
            frequency = (
                len(flip_images.get(label, ())) / population if population else 0.0
            )
        else:  # conditional
            frequency = len(flip_images.get(label, ())) / support
        rows.append(CofRow(label=label, count=count, frequency=frequency, support=support))

    return CofTable(
        mode=query.mode,
        rows=_finish_rows(rows, query),
        total_counterfactuals=total_flips,
        total_images=population,
        query=query,
    )


def cof_table(
    evaluations: Sequence[Evaluation],
    query: CofQuery,
    *,
    total_images: int | None = None,
    flips_only: bool = False,
) -> CofTable:
    """Aggregate under whatever mode the query names."""
    return _build_table(evaluations, query, total_images, flips_only)


def cof_counts(evaluations, query=None, **kw) -> CofTable:
    query = replace(query or CofQuery(), mode="counts")
    return _build_table(evaluations, query, kw.get("total_images"), kw.get("flips_only", False))


def cof_share(evaluations, query=None, **kw) -> CofTable:
    query = replace(query or CofQuery(), mode="share")
    return _build_table(evaluations, query, kw.get("total_images"), kw.get("flips_only", False))


def cof_per_image(evaluations, query=None, **kw) -> CofTable:
    query = replace(query or CofQuery(), mode="per_image")
    return _build_table(evaluations, query, kw.get("total_images"), kw.get("flips_only", False))


def cof_conditional(evaluations, query=None, **kw) -> CofTable:
    query = replace(query or CofQuery(), mode="conditional")
    return _build_table(evaluations, query, kw.get("total_images"), kw.get("flips_only", False))


def cof_by_class(
    evaluations: Sequence[Evaluation],
    query: CofQuery,
    *,
    total_images: int | None = None,
    flips_only: bool = False,
) -> dict[str, CofTable]:
    """One table per original predicted class present after filtering."""
    filtered = apply_row_filters(evaluations, query)
    classes = sorted({e.original_class for e in filtered})
    return {
        cls: _build_table(
            evaluations,
            replace(query, class_filter=cls),
            total_images,
            flips_only,
        )
        for cls in classes
    }


def group_by_position(
    evaluations: Sequence[Evaluation],
    label: str,
    query: CofQuery | None = None,
    *,
    total_images: int | None = None,
    flips_only: bool = False,
) -> CofTable:
    """Share of one label's counterfactuals per position bucket."""
    query = replace(query or CofQuery(), mode="share")
    filtered = [e for e in apply_row_filters(evaluations, query) if e.segment_label == label]
    flips = [e for e in filtered if e.flipped]
    total = len(flips)

    counts: dict[str, int] = {}
    support_images: dict[str, set[str]] = {}
    for e in filtered:
        support_images.setdefault(e.position.value, set()).add(e.image_id)
    for e in flips:
        counts[e.position.value] = counts.get(e.position.value, 0) + 1

    rows = [
        CofRow(
            label=bucket,
            count=counts.get(bucket, 0),
            frequency=(counts.get(bucket, 0) / total) if total else 0.0,
            support=len(images),
        )
        for bucket, images in support_images.items()
    ]
    return CofTable(
        mode="share",
        rows=_finish_rows(rows, query),
        total_counterfactuals=total,
        total_images=_population(evaluations, query, total_images),
        query=query,
    )


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

_MODE_CAPTIONS = {
    "counts": "raw counterfactual counts",
    "share": "share of all counterfactuals found",
    "per_image": "fraction of all images in scope",
    "conditional": "among images containing the label",
}


def format_frequency(mode: str, frequency: float) -> str:
    if mode == "counts":
        return str(int(frequency))
    return f"{frequency * 100:.1f}%"


def render_table(table: CofTable, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(table.to_json_dict(), indent=2, sort_keys=True)
    if fmt == "csv":
        lines = ["label,count,frequency,support"]
        for r in table.rows:
            lines.append(f"{r.label},{r.count},{r.frequency!r},{r.support}")
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    header = ["label", "count", "frequency", "support"]
    body = [
        [r.label, str(r.count), format_frequency(table.mode, r.frequency), str(r.support)]
        for r in table.rows
    ]
    widths = [
        max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
        for i in range(4)
    ]
    out = [
        f"mode: {table.mode} ({_MODE_CAPTIONS[table.mode]})  "
        f"counterfactuals: {table.total_counterfactuals}  images: {table.total_images}"
    ]
    out.append(
        "  ".join(
            h.ljust(widths[i]) if i == 0 else h.rjust(widths[i])
            for i, h in enumerate(header)
        )
    )
    for row in body:
        out.append(
            "  ".join(
                cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                for i, cell in enumerate(row)
            )
        )
    return "\n".join(out) + "\n"


def by_class_to_json_dict(tables: dict[str, CofTable]) -> dict:
    return {"by_class": {cls: t.to_json_dict() for cls, t in sorted(tables.items())}}


def render_by_class(tables: dict[str, CofTable], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(by_class_to_json_dict(tables), indent=2, sort_keys=True)
    if fmt == "csv":
        lines = ["class,label,count,frequency,support"]
        for cls in sorted(tables):
            for r in tables[cls].rows:
                lines.append(f"{cls},{r.label},{r.count},{r.frequency!r},{r.support}")
        return "\n".join(lines) + "\n"
    chunks = []
    for cls in sorted(tables):
        chunks.append(f"class: {cls}")
        chunks.append(render_table(tables[cls], "text"))
    return "\n".join(chunks)
