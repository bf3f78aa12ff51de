"""Command-line interface: the detection workflow as composable subcommands."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import pipeline
from .config import load_config, parse_set_option
from .io import InputError

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


def _fail(file: str, field: str, reason: str) -> None:
    record = {"error": {"file": str(file), "field": field, "reason": reason}}
    click.echo(json.dumps(record), err=True)
    sys.exit(1)


def _build_config(config_path, sets, flags: dict | None = None):
    overrides: dict[str, dict] = {}
    try:
        if sets:
            overrides = parse_set_option(sets)
        for (section, key), value in (flags or {}).items():
            if value is not None:
                overrides.setdefault(section, {})[key] = value
        return load_config(config_path, overrides=overrides)
    except FileNotFoundError:
        _fail(config_path, "-", "config file not found")
    except ValueError as exc:
        _fail(config_path or "-", "config", str(exc))


def _common(func):
    func = click.option("--config", "config_path", type=click.Path(), default=None,
                        help="YAML config file.")(func)
    func = click.option("--set", "sets", multiple=True, metavar="SECTION.KEY=VALUE",
                        help="Override any config value; repeatable.")(func)
    func = click.option("--out-dir", default=None, help="Output directory.")(func)
    return func


def _out_dir(cfg, out_dir) -> Path:
    return Path(out_dir if out_dir is not None else cfg.runtime.out_dir)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except InputError as exc:
        _fail(exc.file, exc.field, exc.reason)
    except ValueError as exc:
        _fail("-", "-", str(exc))


@click.group()
def main() -> None:
    """Tree crown detection: traditional pipeline, box fusion, rule-based
    integration, and evaluation."""


@main.command()
@_common
@click.option("--seed", type=int, default=None, help="Scene seed (overrides config).")
def synth(config_path, sets, out_dir, seed):
    """Render a synthetic scene with ground truth and simulated detections."""
    cfg = _build_config(config_path, sets)
    out = _guarded(pipeline.run_synth, _out_dir(cfg, out_dir), cfg, seed=seed)
    click.echo(f"scene written to {out}")


@main.command("detect-traditional")
@_common
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--w1", type=float, default=None, help="Color-map weight.")
@click.option("--w2", type=float, default=None, help="Texture-map weight.")
@click.option("--th-area", type=int, default=None, help="Small-segment area threshold.")
@click.option("--th-dist", type=float, default=None, help="Maxima merge distance.")
@click.option("--open-radius", type=int, default=None, help="Opening disk radius.")
@click.option("--open-iterations", type=int, default=None, help="Opening iterations.")
def detect_traditional(config_path, sets, out_dir, image_path, w1, w2, th_area,
                       th_dist, open_radius, open_iterations):
    """Color + texture features, joint probability map, watershed, centers."""
    cfg = _build_config(config_path, sets, {
        ("probmap", "w1"): w1,
        ("probmap", "w2"): w2,
        ("probmap", "open_radius"): open_radius,
        ("probmap", "open_iterations"): open_iterations,
        ("segmentation", "th_area"): th_area,
        ("segmentation", "th_dist"): th_dist,
    })
    result = _guarded(pipeline.run_detect_traditional, image_path,
                      _out_dir(cfg, out_dir), cfg)
    click.echo(f"{len(result.segmentation.centers)} tree centers detected")


@main.command()
@_common
@click.option("--detections", "detection_paths", multiple=True, required=True,
              type=click.Path(), help="Detection JSON file(s); repeatable.")
@click.option("--n-models", type=int, default=None,
              help="Ensemble size N (default: max model_id + 1).")
@click.option("--iou-cluster", type=float, default=None, help="Clustering IoU threshold.")
@click.option("--prefilter-score", type=float, default=None, help="Minimum kept score.")
def fuse(config_path, sets, out_dir, detection_paths, n_models, iou_cluster,
         prefilter_score):
    """Weighted boxes fusion of detector outputs."""
    cfg = _build_config(config_path, sets, {
        ("wbf", "iou_cluster"): iou_cluster,
        ("wbf", "prefilter_score"): prefilter_score,
    })
    path = _guarded(pipeline.run_fuse, list(detection_paths), _out_dir(cfg, out_dir),
                    cfg, n_models=n_models)
    click.echo(f"fused boxes written to {path}")


@main.command()
@_common
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--fused", "fused_path", required=True, type=click.Path())
@click.option("--traditional-dir", required=True, type=click.Path(),
              help="Directory holding detect-traditional outputs.")
@click.option("--tau-a", type=float, default=None, help="Box acceptance score.")
@click.option("--tau-c", type=float, default=None, help="Contour size tolerance.")
@click.option("--tau-d", type=float, default=None, help="Neighbor distance (px).")
def integrate(config_path, sets, out_dir, image_path, fused_path, traditional_dir,
              tau_a, tau_c, tau_d):
    """Rule-based integration of fused boxes with traditional results."""
    cfg = _build_config(config_path, sets, {
        ("integrate", "tau_a"): tau_a,
        ("integrate", "tau_c"): tau_c,
        ("integrate", "tau_d"): tau_d,
    })
    path = _guarded(pipeline.run_integrate, image_path, fused_path, traditional_dir,
                    _out_dir(cfg, out_dir), cfg)
    click.echo(f"integrated result written to {path}")


@main.command()
@_common
@click.option("--predictions", "predictions_path", required=True, type=click.Path(),
              help="Integrated result or centers JSON.")
@click.option("--ground-truth", "gt_path", required=True, type=click.Path())
def evaluate(config_path, sets, out_dir, predictions_path, gt_path):
    """Match predictions to ground truth and report the detection rate."""
    cfg = _build_config(config_path, sets)
    report = _guarded(pipeline.run_evaluate, predictions_path, gt_path,
                      _out_dir(cfg, out_dir), cfg)
    click.echo(f"detection rate {report.percent:.1f}% "
               f"({report.detected}/{report.total_gt})")


@main.command("all")
@_common
@click.option("--image", "image_path", required=True, type=click.Path(),
              help="Image file, or a directory of images for batch mode.")
@click.option("--detections", "detection_paths", multiple=True, type=click.Path(),
              help="Detection JSON file(s). In batch mode, a directory of "
                   "<stem>.json files.")
@click.option("--ground-truth", "gt_path", type=click.Path(), default=None)
@click.option("--n-models", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Worker processes for batch mode.")
@click.option("--tau-a", type=float, default=None)
@click.option("--iou-cluster", type=float, default=None)
def run_all(config_path, sets, out_dir, image_path, detection_paths, gt_path,
            n_models, workers, tau_a, iou_cluster):
    """Full chain: detect-traditional, fuse, integrate, evaluate."""
    cfg = _build_config(config_path, sets, {
        ("integrate", "tau_a"): tau_a,
        ("wbf", "iou_cluster"): iou_cluster,
        ("runtime", "workers"): workers,
    })
    out = _out_dir(cfg, out_dir)
    image = Path(image_path)
    if image.is_dir():
        images = sorted(p for p in image.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not images:
            _fail(image_path, "-", "no images found in directory")
        jobs = []
        for img in images:
            dets = [Path(d) / f"{img.stem}.json" for d in detection_paths]
            gt = Path(gt_path) / f"{img.stem}.json" if gt_path else None
            jobs.append((img, dets, gt, out / img.stem))
        reports = _guarded(pipeline.run_all_batch, jobs, cfg,
                           workers=cfg.runtime.workers, n_models=n_models)
        scored = [r for r in reports if r is not None]
        if scored:
            combined = pipeline.aggregate_reports(scored, out)
            click.echo(f"detection rate {combined.percent:.1f}% "
                       f"({combined.detected}/{combined.total_gt}) over {len(scored)} images")
        else:
            click.echo(f"processed {len(jobs)} images (no ground truth given)")
        return
    if not detection_paths:
        _fail("-", "--detections", "at least one detection file is required")
    report = _guarded(pipeline.run_all, image_path, list(detection_paths), gt_path,
                      out, cfg, n_models=n_models)
    if report is not None:
        click.echo(f"detection rate {report.percent:.1f}% "
                   f"({report.detected}/{report.total_gt})")
    else:
        click.echo(f"pipeline outputs written to {out}")


if __name__ == "__main__":
    main()
