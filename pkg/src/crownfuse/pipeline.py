"""Stage orchestration: the end-to-end workflow behind the CLI subcommands.

Each ``run_*`` function is a file-to-file transformation with fixed output
names, so chaining them (what ``run_all`` does) produces byte-identical
files to running the subcommands separately.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import PipelineConfig
from .evaluation import EvalReport, combine_reports, match_and_rate
from .features import gabor_bank, gabor_feature_map, green_dominance_map
from .integrate import (
    AvgCrownSize,
    average_crown_size,
    filter_boxes,
    refine_segmentation,
    validate_centers,
)
from .probmap import ProbabilityMap, candidate_mask, joint_probability_map
from .raster import distance_transform
from .segmentation import (
    SegmentationResult,
    TreeCenter,
    build_segments,
    extract_centers,
    watershed_split,
)
from .synth import SceneSpec, random_scene_spec, render_scene, simulate_detections
from .wbf import DetectionBox, FusedBox, fuse

TRADITIONAL_FILES = {
    "color": "color_invariant.png",
    "texture": "gabor_features.png",
    "prob": "probability_map.png",
    "mask": "candidate_mask.png",
    "labels": "traditional_labels.png",
    "centers": "traditional_centers.json",
}
FUSED_FILE = "fused.json"
INTEGRATED_FILE = "integrated.json"
REFINED_LABELS_FILE = "refined_labels.png"
OVERLAY_FILE = "overlay.png"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
SCENE_FILE = "scene.png"
GROUND_TRUTH_FILE = "ground_truth.json"
DETECTIONS_FILE = "detections.json"


@dataclass
class TraditionalOutputs:
    color: np.ndarray
    texture: np.ndarray
    prob: ProbabilityMap
    mask: np.ndarray
    segmentation: SegmentationResult


def _tiled_gabor(image: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Gabor responses computed tile by tile (bounded memory), then one
    global min-max normalization. Tiles carry ``overlap`` pixels of real
    context on each side; only the core region of each tile is kept."""
    from .features import _grouped_responses

    tile = cfg.tiling.tile_size
    overlap = cfg.tiling.overlap
    kernels = gabor_bank(cfg.gabor)
    h, w = image.shape[:2]
    rgb = image.astype(np.float32) / 255.0
    planes = [rgb.mean(axis=-1)] if cfg.gabor.channel_mode == "luminance" else \
        [rgb[..., c] for c in range(3)]
    count = len(planes) * len(kernels)
    acc = np.zeros((h, w), dtype=np.float32)
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            y1, x1 = min(h, y0 + tile), min(w, x0 + tile)
            cy0, cx0 = max(0, y0 - overlap), max(0, x0 - overlap)
            cy1, cx1 = min(h, y1 + overlap), min(w, x1 + overlap)
            tiles = [p[cy0:cy1, cx0:cx1] for p in planes]
            active = [p for p in tiles if p.min() != p.max()]
            if not active:
                continue
            resp = _grouped_responses(active, kernels)
            acc[y0:y1, x0:x1] = resp[y0 - cy0:y0 - cy0 + (y1 - y0),
                                     x0 - cx0:x0 - cx0 + (x1 - x0)]
    feature = acc.astype(np.float64) / count
    lo, hi = float(feature.min()), float(feature.max())
    if hi - lo < 1e-12:
        return np.zeros((h, w), dtype=np.float64)
    return (feature - lo) / (hi - lo)


def detect_traditional(image: np.ndarray, cfg: PipelineConfig | None = None) -> TraditionalOutputs:
    """Full traditional pipeline on one image.

    A constant joint map (nothing green, no texture) cannot be thresholded;
    that case degrades to an empty segmentation instead of failing.
    """
    cfg = cfg or PipelineConfig()
    color = green_dominance_map(image, cfg.green)
    use_tiling = cfg.tiling.enabled and (
        image.shape[0] > cfg.tiling.tile_size or image.shape[1] > cfg.tiling.tile_size
    )
    if use_tiling:
        texture = _tiled_gabor(image, cfg)
    else:
        texture = gabor_feature_map(image, cfg.gabor)
    prob = joint_probability_map(color, texture, w1=cfg.probmap.w1, w2=cfg.probmap.w2)
    try:
        mask = candidate_mask(prob, open_radius=cfg.probmap.open_radius,
                              open_iterations=cfg.probmap.open_iterations)
    except ValueError:
        mask = np.zeros(color.shape, dtype=np.uint8)
    labels = watershed_split(mask)
    segmentation = extract_centers(labels, distance_transform(mask),
                                   th_area=cfg.segmentation.th_area,
                                   th_dist=cfg.segmentation.th_dist)
    return TraditionalOutputs(color=color, texture=texture, prob=prob, mask=mask,
                              segmentation=segmentation)


def integrated_predictions(boxes: list[FusedBox], centers: list[TreeCenter],
                           width: int, height: int) -> list[TreeCenter]:
    """Point predictions of the integrated result: accepted detector boxes
    (as their center pixels) first, validated traditional centers after."""
    points = []
    for box in boxes:
        cx, cy = box.center
        points.append(TreeCenter(x=int(cx * width), y=int(cy * height),
                                 segment_label=0, source="validated-bbox"))
    points.extend(centers)
    return points


# ---------------------------------------------------------------------------
# File-level stages.

def run_synth(out_dir, cfg: PipelineConfig, seed: int | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.synth
    actual_seed = s.seed if seed is None else seed
    if s.crowns is not None:
        spec = SceneSpec(width=s.width, height=s.height,
                         crowns=tuple(tuple(c) for c in s.crowns),
                         background=tuple(s.background), clutter=s.clutter,
                         seed=actual_seed)
    else:
        spec = random_scene_spec(s.width, s.height, s.n_crowns, actual_seed,
                                 radius_range=(s.radius_min, s.radius_max),
                                 intensity_range=(s.intensity_min, s.intensity_max),
                                 clutter=s.clutter, background=tuple(s.background))
    image, gt = render_scene(spec)
    image_id = f"synth-{actual_seed}"
    io.write_image(out / SCENE_FILE, image)
    io.write_ground_truth(out / GROUND_TRUTH_FILE, image_id, s.width, s.height, gt)
    detections = simulate_detections(gt, s.n_models, s.drop_rate, s.jitter,
                                     seed=actual_seed + 1)
    io.write_detections(out / DETECTIONS_FILE, image_id, s.width, s.height, detections)
    return out


def run_detect_traditional(image_path, out_dir, cfg: PipelineConfig) -> TraditionalOutputs:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = io.read_image(image_path)
    result = detect_traditional(image, cfg)
    io.write_mask_png(out / TRADITIONAL_FILES["color"], result.color)
    io.write_unit_png16(out / TRADITIONAL_FILES["texture"], result.texture)
    io.write_gray_png(out / TRADITIONAL_FILES["prob"], result.prob.values)
    io.write_mask_png(out / TRADITIONAL_FILES["mask"], result.mask)
    io.write_labels_png(out / TRADITIONAL_FILES["labels"], result.segmentation.labels)
    io.write_centers(out / TRADITIONAL_FILES["centers"], Path(image_path).stem,
                     image.shape[1], image.shape[0], result.segmentation.centers)
    return result


def run_fuse(detection_paths, out_dir, cfg: PipelineConfig,
             n_models: int | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    boxes: list[DetectionBox] = []
    image_id, width, height = "", 0, 0
    for i, path in enumerate(detection_paths):
        this_id, this_w, this_h, these = io.read_detections(path)
        if i == 0:
            image_id, width, height = this_id, this_w, this_h
        elif (this_w, this_h) != (width, height):
            raise io.InputError(path, "width/height",
                                f"dimension mismatch with {detection_paths[0]}")
        boxes.extend(these)
    if n_models is None:
        n_models = max((b.model_id for b in boxes), default=0) + 1
    fused = fuse(boxes, n_models=n_models, config=cfg.wbf)
    io.write_fused(out / FUSED_FILE, image_id, width, height, n_models, fused)
    return out / FUSED_FILE


def _load_traditional(traditional_dir, image_shape) -> tuple[TraditionalOutputs, str]:
    tdir = Path(traditional_dir)
    color = io.read_mask_png(tdir / TRADITIONAL_FILES["color"])
    texture = io.read_unit_png16(tdir / TRADITIONAL_FILES["texture"])
    labels = io.read_labels_png(tdir / TRADITIONAL_FILES["labels"])
    image_id, width, height, centers = io.read_centers(tdir / TRADITIONAL_FILES["centers"])
    for name, arr in (("color_invariant", color), ("gabor_features", texture),
                      ("traditional_labels", labels)):
        if arr.shape[:2] != image_shape[:2]:
            raise io.InputError(tdir / f"{name}.png", "dimensions",
                                f"dimension mismatch: {arr.shape[:2]} vs image {image_shape[:2]}")
    distance = distance_transform((labels > 0).astype(np.uint8))
    seg = SegmentationResult(labels=labels, segments=build_segments(labels, distance),
                             centers=centers)
    mask = (labels > 0).astype(np.uint8)
    dummy_prob = joint_probability_map(color, np.zeros_like(texture), 0.5, 0.5)
    return TraditionalOutputs(color=color, texture=texture, prob=dummy_prob,
                              mask=mask, segmentation=seg), image_id


def run_integrate(image_path, fused_path, traditional_dir, out_dir,
                  cfg: PipelineConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = io.read_image(image_path)
    image_id, width, height, _, fused = io.read_fused(fused_path)
    if (width, height) != (image.shape[1], image.shape[0]):
        raise io.InputError(fused_path, "width/height",
                            f"dimension mismatch: {width}x{height} vs image "
                            f"{image.shape[1]}x{image.shape[0]}")
    traditional, _ = _load_traditional(traditional_dir, image.shape)

    icfg = cfg.integrate
    accepted = filter_boxes(fused, icfg.tau_a)
    try:
        avg = average_crown_size(accepted, traditional.segmentation, icfg.expansion)
    except ValueError:
        avg = AvgCrownSize(width=icfg.fallback_crown_w, height=icfg.fallback_crown_h,
                           sample_count=0)
    reliable = validate_centers(traditional.segmentation.centers, accepted, avg,
                                traditional.color, traditional.texture, icfg)
    reliable_labels = {
        int(traditional.segmentation.labels[c.y, c.x]) or c.segment_label
        for c in reliable.centers
    }
    dropped = sum(1 for seg in traditional.segmentation.segments
                  if seg.label not in reliable_labels)
    refined = refine_segmentation(reliable, traditional.segmentation,
                                  open_radius=icfg.refine_open_radius)

    io.write_integrated(out / INTEGRATED_FILE, image_id, width, height,
                        refined.centers, accepted, dropped)
    io.write_labels_png(out / REFINED_LABELS_FILE, refined.labels)
    boxes_px = [(b.x1 * width, b.y1 * height, b.x2 * width, b.y2 * height)
                for b in accepted]
    io.write_image(out / OVERLAY_FILE, io.draw_overlay(image, boxes_px, refined.centers))
    return out / INTEGRATED_FILE


def run_evaluate(predictions_path, gt_path, out_dir, cfg: PipelineConfig) -> EvalReport:
    """Score a predictions file (integrated result or plain centers) against
    ground truth. Integrated boxes participate as center points."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image_id, width, height, gt = io.read_ground_truth(gt_path)
    raw = json.loads(Path(predictions_path).read_text())
    if "boxes" in raw and "centers" in raw:
        _, pw, ph, centers, boxes, _ = io.read_integrated(predictions_path)
        predictions = integrated_predictions(boxes, centers, pw, ph)
    elif "centers" in raw:
        _, pw, ph, predictions = io.read_centers(predictions_path)
    else:
        raise io.InputError(predictions_path, "centers", "no centers in predictions file")
    report = match_and_rate(predictions, gt, width, height, image_id=image_id)
    io.write_report(out / REPORT_JSON, out / REPORT_TEXT, report)
    return report


def run_all(image_path, detection_paths, gt_path, out_dir, cfg: PipelineConfig,
            n_models: int | None = None) -> EvalReport | None:
    """Full chain on one image; identical outputs to the four subcommands."""
    out = Path(out_dir)
    run_detect_traditional(image_path, out, cfg)
    fused_path = run_fuse(detection_paths, out, cfg, n_models=n_models)
    integrated = run_integrate(image_path, fused_path, out, out, cfg)
    if gt_path is None:
        return None
    return run_evaluate(integrated, gt_path, out, cfg)


def _run_all_one(args) -> tuple[str, EvalReport | None]:
    image_path, detection_paths, gt_path, out_dir, cfg, n_models = args
    report = run_all(image_path, detection_paths, gt_path, out_dir, cfg, n_models)
    return str(out_dir), report


def run_all_batch(jobs, cfg: PipelineConfig, workers: int = 1,
                  n_models: int | None = None) -> list[EvalReport | None]:
    """Process (image, detections, gt, out_dir) jobs with a worker pool."""
    args = [(img, dets, gt, out, cfg, n_models) for img, dets, gt, out in jobs]
    if workers <= 1 or len(args) <= 1:
        return [_run_all_one(a)[1] for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [report for _, report in pool.map(_run_all_one, args)]


def aggregate_reports(reports: list[EvalReport], out_dir) -> EvalReport:
    combined = combine_reports(reports)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_report(out / REPORT_JSON, out / REPORT_TEXT, combined)
    return combined
