"""Command-line front end.

Workflow: ``make-dataset`` builds a controlled dataset, ``scan`` runs the
counterfactual search described by a config file, ``cof`` renders
frequency tables from a finished run, ``explain`` prints the
original/overlay/edited triptych for one image, and ``serve`` exposes
runs over HTTP for the explorer UI.

Exit codes everywhere: 0 success, 1 empty or none-found outcomes,
2 usage or configuration errors.
"""

from __future__ import annotations

import os
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import cfsearch, cof, datasets
from .config import RunConfig, build_segmenter
from .datasets import DatasetDir, WatermarkSpec
from .errors import CofscanError, ConfigError, FlipsOnlyLog, MissingGroundTruth
from .imagecore import RasterImage, tint_mask

MODE_FLAGS = {"counts": "counts", "share": "share", "per-image": "per_image", "conditional": "conditional"}


@click.group()
def main():
    """Find and analyze segment-level counterfactuals of image classifiers."""


@main.command("make-dataset")
@click.argument("kind", type=click.Choice(["colored-mnist", "watermark"]))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--n", "n_per_class_mnist", type=int, default=100, show_default=True, help="images per digit class (colored-mnist)")
@click.option("--n-per-class", type=int, default=500, show_default=True, help="images per class (watermark)")
@click.option("--fraction", type=float, default=0.1, show_default=True, help="fraction of the shortcut class to stamp (watermark)")
@click.option("--stratified", is_flag=True, help="cycle stamp corners instead of sampling them")
@click.option("--image-size", type=int, default=64, show_default=True, help="edge length (watermark)")
@click.option("--size", type=int, default=28, show_default=True, help="edge length (colored-mnist)")
@click.option("--source", type=click.Path(exists=True, path_type=Path), default=None, help="grayscale source dataset to colorize instead of synthetic glyphs")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_make_dataset(kind, out_dir, n_per_class_mnist, n_per_class, fraction, stratified, image_size, size, source, seed):
    """Generate a dataset with a planted, verifiable shortcut."""
    try:
        if kind == "colored-mnist":
            summary = datasets.gen_colored_mnist(
                out_dir, n_per_class=n_per_class_mnist, source_dir=source, seed=seed, size=size
            )
        else:
            spec = WatermarkSpec(fraction=fraction, stratified=stratified, image_size=image_size)
            summary = datasets.gen_watermark_dataset(out_dir, spec=spec, n_per_class=n_per_class, seed=seed)
    except (CofscanError, ValueError) as exc:
        raise click.UsageError(str(exc))
    click.echo(f"wrote {summary.image_count} images to {summary.out_dir}")
    for cls in sorted(summary.per_class):
        click.echo(f"  class {cls}: {summary.per_class[cls]}")
    if summary.kind == "watermark":
        click.echo(f"  watermarked: {summary.watermarked}")
        for corner in datasets.CORNER_ORDER:
            click.echo(f"    {corner}: {summary.corner_counts.get(corner, 0)}")


@main.command("scan")
@click.argument("config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--workers", type=int, default=None, help="override the config worker count")
@click.option("--flips-only", is_flag=True, help="record only class-flipping evaluations (disables per-image and conditional tables)")
@click.option("--quiet", is_flag=True)
def cmd_scan(config_path, workers, flips_only, quiet):
    """Run the counterfactual search described by a config file."""
    try:
        config = RunConfig.from_file(config_path)
        env_workers = os.environ.get("COFSCAN_WORKERS")
        if workers is not None:
            config = replace(config, workers=workers)
        elif env_workers:
            config = replace(config, workers=int(env_workers))
        if flips_only:
            config = replace(config, flips_only=True)
    except (ConfigError, ValueError) as exc:
        raise click.UsageError(str(exc))

    def progress(done, total):
        if not quiet and (done % 200 == 0 or done == total):
            click.echo(f"scanned {done}/{total}", err=True)

    try:
        outcome = cfsearch.scan_dataset(config.dataset, config, progress=progress)
    except CofscanError as exc:
        raise click.UsageError(str(exc))
    m = outcome.manifest
    click.echo(
        f"run {m['run_id']}: {m['processed']} processed, "
        f"{m['skipped_no_segments']} skipped, {m['failed']} failed; "
        f"{m['evaluation_count']} evaluations, {m['counterfactual_count']} counterfactuals"
    )
    click.echo(f"run directory: {outcome.run_dir}")
    if m["processed"] == 0:
        sys.exit(1)


def _query_from_flags(mode, class_, position, edit, misclassified_only, corrected_only, min_support, min_frequency, top_k) -> cof.CofQuery:
    try:
        return cof.CofQuery(
            mode=MODE_FLAGS[mode],
            class_filter=class_,
            position=position,
            edit_id=edit,
            misclassified_only=misclassified_only,
            corrected_only=corrected_only,
            min_support=min_support,
            min_frequency=min_frequency,
            top_k=top_k,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


@main.command("cof")
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--mode", type=click.Choice(list(MODE_FLAGS)), default="share", show_default=True)
@click.option("--class", "class_", default=None, help="restrict to one original predicted class")
@click.option("--position", type=click.Choice([b.value for b in cof.PositionBucket]), default=None)
@click.option("--edit", default=None, help="restrict to one edit id")
@click.option("--misclassified-only", is_flag=True)
@click.option("--corrected-only", is_flag=True)
@click.option("--min-support", type=int, default=None)
@click.option("--min-frequency", type=float, default=0.0, show_default=True)
@click.option("--top-k", type=int, default=None)
@click.option("--by-class", is_flag=True, help="partition by original predicted class")
@click.option("--by-position", default=None, metavar="LABEL", help="position breakdown for one label")
@click.option("--format", "fmt", type=click.Choice(["text", "csv", "json"]), default="text", show_default=True)
@click.option("--output", type=click.Path(path_type=Path), default=None, help="write to a file instead of stdout")
def cmd_cof(run_dir, mode, class_, position, edit, misclassified_only, corrected_only, min_support, min_frequency, top_k, by_class, by_position, fmt, output):
    """Render a counterfactual frequency table from a finished run."""
    if by_class and by_position:
        raise click.UsageError("--by-class and --by-position are mutually exclusive")
    query = _query_from_flags(mode, class_, position, edit, misclassified_only, corrected_only, min_support, min_frequency, top_k)
    try:
        run = cfsearch.load_run(run_dir)
    except CofscanError as exc:
        raise click.UsageError(str(exc))
    try:
        if by_class:
            tables = cof.cof_by_class(
                run.evaluations, query, total_images=run.population, flips_only=run.flips_only
            )
            text = cof.render_by_class(tables, fmt)
            empty = not tables
        elif by_position:
            table = cof.group_by_position(
                run.evaluations, by_position, query, total_images=run.population, flips_only=run.flips_only
            )
            text = cof.render_table(table, fmt)
            empty = not table.rows
        else:
            table = cof.cof_table(
                run.evaluations, query, total_images=run.population, flips_only=run.flips_only
            )
            text = cof.render_table(table, fmt)
            empty = not table.rows
    except (MissingGroundTruth, FlipsOnlyLog, ValueError) as exc:
        raise click.UsageError(str(exc))
    if output is not None:
        output.write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)
    if empty:
        click.echo("no rows matched", err=True)
        sys.exit(1)


@main.command("explain")
@click.argument("target", type=click.Path(exists=True, path_type=Path))
@click.argument("image_id")
@click.option("--live", is_flag=True, help="treat TARGET as a scan config and evaluate this one image now")
def cmd_explain(target, image_id, live):
    """Show every counterfactual found for one image, with artifact paths.

    TARGET is a finished run directory, or a scan config with --live.
    """
    if live:
        _explain_live(target, image_id)
        return
    try:
        run = cfsearch.load_run(target)
    except CofscanError as exc:
        raise click.UsageError(str(exc))
    if image_id not in run.manifest.get("images", {}):
        raise click.UsageError(f"unknown image id {image_id!r}")
    flips = [
        e for e in run.evaluations if e.image_id == image_id and e.flipped
    ]
    if not flips:
        click.echo(f"no counterfactuals found for {image_id}")
        sys.exit(1)

    dataset = DatasetDir(run.manifest["dataset"])
    original_path = dataset.image_path(image_id)
    image = RasterImage.load(original_path)
    segmenter = build_segmenter(run.manifest["config"]["segmenter"], dataset)
    try:
        segmentation = segmenter.segment(image, image_id, original_path)
    finally:
        segmenter.close()

    artifact_dir = run.run_dir / "artifacts"
    for e in flips:
        overlay_path = artifact_dir / image_id / f"{e.segment_index}_overlay.png"
        overlay_path.parent.mkdir(parents=True, exist_ok=True)
        mask = segmentation.segments[e.segment_index].mask
        tint_mask(image, mask).save(overlay_path)
        edited_path = cfsearch.artifact_path(artifact_dir, image_id, e.segment_index, e.edit_id)
        click.echo(f"{e.segment_label}: {e.original_class} -> {e.edited_class}")
        click.echo(f"  original: {original_path}")
        click.echo(f"  overlay:  {overlay_path}")
        click.echo(f"  edited:   {edited_path}")


def _explain_live(config_path: Path, image_id: str) -> None:
    """Evaluate one image fresh and print its counterfactuals."""
    from .config import build_classifier, build_editors

    try:
        config = RunConfig.from_file(config_path)
        dataset = DatasetDir(config.dataset)
    except CofscanError as exc:
        raise click.UsageError(str(exc))
    if image_id not in dataset.image_ids:
        raise click.UsageError(f"unknown image id {image_id!r}")
    image_path = dataset.image_path(image_id)
    image = RasterImage.load(image_path)
    segmenter = build_segmenter(config.segmenter, dataset)
    classifier = build_classifier(config.classifier, dataset)
    editors = build_editors(config.edits, config.classifier, dataset)
    artifact_dir = config.out_dir / "artifacts"
    try:
        segmentation = segmenter.segment(image, image_id, image_path)
        result = cfsearch.scan_image(
            image,
            segmenter,
            editors,
            classifier,
            image_id=image_id,
            run_id=config.run_id,
            ground_truth=dataset.ground_truth(image_id),
            image_path=image_path,
            artifact_dir=artifact_dir,
        )
    finally:
        segmenter.close()
        classifier.close()
        for editor in editors:
            editor.close()
    flips = [e for e in result.evaluations if e.flipped]
    if not flips:
        click.echo(f"no counterfactuals found for {image_id}")
        sys.exit(1)
    for e in flips:
        overlay_path = artifact_dir / image_id / f"{e.segment_index}_overlay.png"
        overlay_path.parent.mkdir(parents=True, exist_ok=True)
        tint_mask(image, segmentation.segments[e.segment_index].mask).save(overlay_path)
        edited_path = cfsearch.artifact_path(artifact_dir, image_id, e.segment_index, e.edit_id)
        click.echo(f"{e.segment_label}: {e.original_class} -> {e.edited_class}")
        click.echo(f"  original: {image_path}")
        click.echo(f"  overlay:  {overlay_path}")
        click.echo(f"  edited:   {edited_path}")


@main.command("serve")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--bind", default="127.0.0.1:8765", show_default=True, metavar="HOST:PORT")
@click.option("--ui", type=click.Path(exists=True, path_type=Path), default=None, help="also serve a static UI build from this directory")
def cmd_serve(run_dirs, bind, ui):
    """Serve finished runs over the read-only results API."""
    from . import serveapi

    try:
        app = serveapi.build_app([Path(d) for d in run_dirs], ui_dir=ui)
    except CofscanError as exc:
        raise click.UsageError(str(exc))
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError(f"bad bind address {bind!r}")
    import uvicorn

    try:
        uvicorn.run(app, host=host, port=int(port), log_level="warning")
    except OSError as exc:
        raise click.UsageError(f"cannot bind {bind}: {exc}")


if __name__ == "__main__":
    main()
