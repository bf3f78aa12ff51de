"""Rule-based integration of fused detector boxes with traditional results.

Four steps: score-filter the boxes, measure average crown dimensions from
segmentation contours under each box, validate every traditional tree
center (box containment, then neighbor proximity, then a local
probability-map contour check), and finally refine the segmentation around
the validated crowns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .probmap import joint_probability_map, to_u8
from .raster import as_binary_mask, distance_transform, find_contours, morphological_open, otsu_threshold
from .segmentation import (
    SOURCE_BBOX,
    SOURCE_LOCAL,
    SOURCE_PROXIMITY,
    SegmentationResult,
    TreeCenter,
    build_segments,
    segment_mask,
    watershed_split,
    _renumber_labels,
)
from .wbf import FusedBox


@dataclass(frozen=True)
class IntegrationConfig:
    """Thresholds of the integration rules.

    ``tau_d`` may be None, meaning "derive as 2 * max(mean crown width,
    mean crown height)" at validation time. ``w1``/``w2`` are the joint-map
    weights reused when the probability map is recomputed locally.
    """

    tau_a: float = 0.8
    expansion: float = 0.10
    n_neighbors: int = 2
    tau_d: float | None = None
    tau_c: float = 0.5
    local_crop: float = 1.5
    w1: float = 0.5
    w2: float = 0.5
    fallback_crown_w: float = 16.0
    fallback_crown_h: float = 16.0
    refine_open_radius: int = 1

    def validate(self) -> None:
        if not 0.0 < self.tau_a <= 1.0:
            raise ValueError("tau_a must lie in (0, 1]")
        if self.expansion < 0:
            raise ValueError("expansion must be >= 0")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.tau_d is not None and self.tau_d <= 0:
            raise ValueError("tau_d must be > 0")
        if not 0.0 < self.tau_c <= 1.0:
            raise ValueError("tau_c must lie in (0, 1]")
        if self.local_crop < 1.0:
            raise ValueError("local_crop must be >= 1")
        if self.fallback_crown_w <= 0 or self.fallback_crown_h <= 0:
            raise ValueError("fallback crown dimensions must be > 0")


@dataclass(frozen=True)
class AvgCrownSize:
    """Mean contour bounding-rect dimensions measured under accepted boxes."""

    width: float
    height: float
    sample_count: int


@dataclass(frozen=True)
class ReliableSet:
    """Partition of the input centers into validated and rejected."""

    centers: tuple[TreeCenter, ...]
    rejected: tuple[TreeCenter, ...]


def filter_boxes(boxes: list[FusedBox], tau_a: float = 0.8) -> list[FusedBox]:
    """Keep boxes scoring at least tau_a; order preserved."""
    return [b for b in boxes if b.score >= tau_a]


def _expanded_extent_px(box: FusedBox, expansion: float, width: int, height: int):
    """Box extent in pixels, grown by ``expansion`` of its size per side."""
    x1, y1 = box.x1 * width, box.y1 * height
    x2, y2 = box.x2 * width, box.y2 * height
    dx = expansion * (x2 - x1)
    dy = expansion * (y2 - y1)
    return (max(0.0, x1 - dx), max(0.0, y1 - dy),
            min(float(width), x2 + dx), min(float(height), y2 + dy))


def average_crown_size(boxes: list[FusedBox], seg: SegmentationResult,
                       expansion: float = 0.10) -> AvgCrownSize:
    """Mean (w, h) of mask contours found inside each expanded box crop.

    Raises ValueError("no crown statistics") when no contour is found under
    any box; callers fall back to configured defaults.
    """
    mask = segment_mask(seg)
    height, width = mask.shape
    widths: list[int] = []
    heights: list[int] = []
    for box in boxes:
        ex1, ey1, ex2, ey2 = _expanded_extent_px(box, expansion, width, height)
        ix1, iy1 = int(math.floor(ex1)), int(math.floor(ey1))
        ix2, iy2 = int(math.ceil(ex2)), int(math.ceil(ey2))
        crop = mask[iy1:iy2, ix1:ix2]
        if crop.size == 0:
            continue
        for contour in find_contours(crop):
            widths.append(contour.width)
            heights.append(contour.height)
    if not widths:
        raise ValueError("no crown statistics: no contours under any accepted box")
    return AvgCrownSize(width=float(np.mean(widths)), height=float(np.mean(heights)),
                        sample_count=len(widths))


def _local_contours(center: TreeCenter, avg: AvgCrownSize, color_map: np.ndarray,
                    texture_map: np.ndarray, cfg: IntegrationConfig):
    """Contours of a locally recomputed probability map around a center.

    The window spans local_crop * (mean w, mean h); the joint map is rebuilt
    from the cropped feature maps and thresholded with a crop-local Otsu (no
    opening: windows are small and the local threshold is the point).
    """
    height, width = color_map.shape
    half_w = max(1, int(round(cfg.local_crop * avg.width / 2.0)))
    half_h = max(1, int(round(cfg.local_crop * avg.height / 2.0)))
    ix1 = max(0, center.x - half_w)
    iy1 = max(0, center.y - half_h)
    ix2 = min(width, center.x + half_w + 1)
    iy2 = min(height, center.y + half_h + 1)
    if ix1 >= ix2 or iy1 >= iy2:
        return []
    local = joint_probability_map(color_map[iy1:iy2, ix1:ix2],
                                  texture_map[iy1:iy2, ix1:ix2],
                                  w1=cfg.w1, w2=cfg.w2)
    scaled = to_u8(local)
    try:
        t = otsu_threshold(scaled)
    except ValueError:
        return []
    return find_contours((scaled > t).astype(np.uint8))


def validate_centers(centers: list[TreeCenter], boxes: list[FusedBox], avg: AvgCrownSize,
                     color_map, texture_map, cfg: IntegrationConfig | None = None) -> ReliableSet:
    """Validate traditional centers against detector boxes and local evidence.

    Rules apply in fixed order per center: (a) inside any expanded box ->
    "validated-bbox"; (b) at least n_neighbors other input centers within
    tau_d -> "validated-proximity"; (c) some contour of the local
    probability map matches the average crown size within tau_c ->
    "validated-local"; otherwise rejected. Proximity counts neighbors among
    all input centers, not only validated ones.
    """
    cfg = cfg or IntegrationConfig()
    cfg.validate()
    color = as_binary_mask(color_map).astype(np.uint8)
    texture = np.asarray(texture_map, dtype=np.float64)
    if color.shape != texture.shape:
        raise ValueError(f"dimension mismatch: color {color.shape} vs texture {texture.shape}")
    height, width = color.shape
    tau_d = cfg.tau_d if cfg.tau_d is not None else 2.0 * max(avg.width, avg.height)

    extents = [_expanded_extent_px(b, cfg.expansion, width, height) for b in boxes]
    coords = np.array([(c.x, c.y) for c in centers], dtype=np.float64)

    accepted: list[TreeCenter] = []
    rejected: list[TreeCenter] = []
    for idx, center in enumerate(centers):
        x, y = float(center.x), float(center.y)
        if any(ex1 <= x <= ex2 and ey1 <= y <= ey2 for ex1, ey1, ex2, ey2 in extents):
            accepted.append(center.with_source(SOURCE_BBOX))
            continue
        if len(centers) > 1:
            d = np.hypot(coords[:, 0] - x, coords[:, 1] - y)
            d[idx] = np.inf
            if int((d <= tau_d).sum()) >= cfg.n_neighbors:
                accepted.append(center.with_source(SOURCE_PROXIMITY))
                continue
        matched = False
        for contour in _local_contours(center, avg, color, texture, cfg):
            if (abs(contour.width - avg.width) / avg.width <= cfg.tau_c
                    and abs(contour.height - avg.height) / avg.height <= cfg.tau_c):
                matched = True
                break
        if matched:
            accepted.append(center.with_source(SOURCE_LOCAL))
        else:
            rejected.append(center)
    return ReliableSet(centers=tuple(accepted), rejected=tuple(rejected))


def _nearest_label(labels: np.ndarray, x: int, y: int) -> int:
    """Label at (x, y), or of the nearest labeled pixel when it sits on background."""
    lab = int(labels[y, x])
    if lab > 0:
        return lab
    ys, xs = np.nonzero(labels)
    if len(ys) == 0:
        return 0
    d = (xs - x) ** 2 + (ys - y) ** 2
    i = int(np.argmin(d))
    return int(labels[ys[i], xs[i]])


def refine_segmentation(reliable: ReliableSet, seg: SegmentationResult,
                        open_radius: int = 1) -> SegmentationResult:
    """Prune and re-split segments around the validated crowns.

    Segments holding no reliable center are dropped. A segment holding two
    or more gets opened (disk ``open_radius``) and re-watershedded locally;
    pieces that end up without a center are pruned too. Labels, segments,
    and centers are renumbered and re-synchronized.
    """
    labels = np.asarray(seg.labels).astype(np.int32)
    n_labels = int(labels.max())
    counts = np.zeros(n_labels + 1, dtype=np.int64)
    for center in reliable.centers:
        lab = int(labels[center.y, center.x])
        if lab == 0:
            lab = center.segment_label if 0 < center.segment_label <= n_labels else 0
        if lab > 0:
            counts[lab] += 1

    working = np.zeros_like(labels)
    next_label = 1
    slices = ndi.find_objects(labels, max_label=n_labels)
    for lab in range(1, n_labels + 1):
        if counts[lab] == 0:
            continue  # false-positive pruning
        sl = slices[lab - 1]
        region = labels[sl] == lab
        if counts[lab] == 1:
            working[sl][region] = next_label
            next_label += 1
            continue
        opened = morphological_open(region.astype(np.uint8), radius=open_radius, iterations=1)
        if not opened.any():
            opened = region.astype(np.uint8)  # refinement would erase the segment; keep it
        split = watershed_split(opened)
        pieces = int(split.max())
        remap = split + np.where(split > 0, next_label - 1, 0)
        keep = remap > 0
        working[sl][keep] = remap[keep]
        next_label += pieces

    # Re-home centers, then prune split pieces that attracted none.
    homes = [_nearest_label(working, c.x, c.y) for c in reliable.centers]
    kept_labels = sorted({h for h in homes if h > 0})
    lut = np.zeros(int(working.max()) + 1, dtype=np.int32)
    for h in kept_labels:
        lut[h] = 1
    pruned = np.where(lut[working] > 0, working, 0)
    final_labels = _renumber_labels(pruned) if pruned.any() else pruned

    centers = []
    for center, home in zip(reliable.centers, homes):
        if home <= 0:
            continue
        new_lab = _nearest_label(final_labels, center.x, center.y)
        centers.append(TreeCenter(x=center.x, y=center.y, segment_label=new_lab,
                                  source=center.source))
    distance = distance_transform((final_labels > 0).astype(np.uint8))
    return SegmentationResult(labels=final_labels,
                              segments=build_segments(final_labels, distance),
                              centers=centers)
