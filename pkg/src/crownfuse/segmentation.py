"""Crown segmentation: marker-based watershed plus tree-center extraction."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage as ndi

from .raster import (
    Contour,
    as_binary_mask,
    connected_components,
    distance_transform,
    find_contours,
    flood_labels,
    local_maxima,
    round_half_up,
    _renumber_labels,
)

SOURCE_TRADITIONAL = "traditional"
SOURCE_BBOX = "validated-bbox"
SOURCE_PROXIMITY = "validated-proximity"
SOURCE_LOCAL = "validated-local"
VALID_SOURCES = (SOURCE_TRADITIONAL, SOURCE_BBOX, SOURCE_PROXIMITY, SOURCE_LOCAL)


@dataclass(frozen=True)
class TreeCenter:
    """A validated or candidate trunk position."""

    x: int
    y: int
    segment_label: int
    source: str = SOURCE_TRADITIONAL

    def with_source(self, source: str) -> "TreeCenter":
        if source not in VALID_SOURCES:
            raise ValueError(f"unknown center source {source!r}")
        return replace(self, source=source)


@dataclass(frozen=True)
class Segment:
    """One labeled crown region."""

    label: int
    area: int
    contour: Contour
    maxima: tuple[tuple[int, int], ...]


@dataclass
class SegmentationResult:
    labels: np.ndarray
    segments: list[Segment]
    centers: list[TreeCenter]


def _markers_by_region(labels: np.ndarray, distance: np.ndarray) -> dict[int, list[tuple[int, int]]]:
    """Strict distance maxima grouped by region label.

    A region whose distance peak is a plateau has no strict maximum; it
    falls back to the raster-first pixel of maximal distance so that every
    region keeps at least one marker.
    """
    peaks = local_maxima(distance, min_value=1.0)
    by_region: dict[int, list[tuple[int, int]]] = {}
    for x, y in peaks:
        label = int(labels[y, x])
        if label > 0:
            by_region.setdefault(label, []).append((x, y))
    n_regions = int(labels.max())
    missing = [lab for lab in range(1, n_regions + 1) if lab not in by_region]
    if missing:
        slices = ndi.find_objects(labels, max_label=n_regions)
        for lab in missing:
            sl = slices[lab - 1]
            if sl is None:
                continue
            region = labels[sl] == lab
            local = np.where(region, distance[sl], -1.0)
            flat = int(np.argmax(local))
            dy, dx = np.unravel_index(flat, local.shape)
            by_region[lab] = [(int(dx) + sl[1].start, int(dy) + sl[0].start)]
    return by_region


def watershed_split(mask) -> np.ndarray:
    """Split touching crowns: markers at distance-transform maxima, then flooding.

    Flooding runs on the negated city-block distance with 8-connectivity in
    priority-queue order; ties break by insertion order, so results are
    deterministic. Final labels are renumbered by raster order of each
    segment's first pixel, which makes disjoint regions come out exactly as
    connected_components would label them.
    """
    m = as_binary_mask(mask)
    labels = np.zeros(m.shape, dtype=np.int32)
    if m.size == 0 or not m.any():
        return labels
    dist = distance_transform(m)
    comps = connected_components(m)
    markers = _markers_by_region(comps, dist)

    n_comps = int(comps.max())
    ordered: list[tuple[tuple[int, int], int]] = []
    comp_of: dict[int, int] = {}
    for comp in range(1, n_comps + 1):
        for point in sorted(markers.get(comp, []), key=lambda p: (p[1], p[0])):
            label = len(ordered) + 1
            ordered.append((point, label))
            comp_of[label] = comp

    single = {comp for comp in range(1, n_comps + 1)
              if sum(1 for _, lab in ordered if comp_of[lab] == comp) == 1}
    lut = np.zeros(n_comps + 1, dtype=np.int32)
    for point, lab in ordered:
        if comp_of[lab] in single:
            lut[comp_of[lab]] = lab
    labels = lut[comps]

    multi = [comp for comp in range(1, n_comps + 1) if comp not in single]
    if multi:
        slices = ndi.find_objects(comps, max_label=n_comps)
        for comp in multi:
            sl = slices[comp - 1]
            sub_mask = (comps[sl] == comp).astype(np.uint8)
            sub_markers = [
                ((x - sl[1].start, y - sl[0].start), lab)
                for (x, y), lab in ordered
                if comp_of[lab] == comp
            ]
            flooded = flood_labels(sub_mask, dist[sl], sub_markers)
            region = sub_mask.astype(bool)
            labels[sl][region] = flooded[region]
    return _renumber_labels(labels)


def _single_linkage(points: list[tuple[int, int]], threshold: float) -> list[list[tuple[int, int]]]:
    """Cluster points whose Euclidean distance is strictly below threshold."""
    n = len(points)
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            dx = points[i][0] - points[j][0]
            dy = points[i][1] - points[j][1]
            if dx * dx + dy * dy < threshold * threshold:
                parent[find(j)] = find(i)
    clusters: dict[int, list[tuple[int, int]]] = {}
    for i, p in enumerate(points):
        clusters.setdefault(find(i), []).append(p)
    # Order clusters by their first member (points arrive in raster order).
    return sorted(clusters.values(), key=lambda c: (c[0][1], c[0][0]))


def _centroid(points: list[tuple[int, int]]) -> tuple[int, int]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return round_half_up(sum(xs) / len(xs)), round_half_up(sum(ys) / len(ys))


def segment_contour(labels: np.ndarray, label: int, sl=None) -> Contour:
    """Outer contour of one labeled segment, in full-image coordinates."""
    if sl is None:
        sl = ndi.find_objects(labels == label, max_label=1)[0]
    crop = (labels[sl] == label).astype(np.uint8)
    traced = find_contours(crop)[0]
    ox, oy = sl[1].start, sl[0].start
    x, y, w, h = traced.bounding_rect
    return Contour(
        points=tuple((px + ox, py + oy) for px, py in traced.points),
        bounding_rect=(x + ox, y + oy, w, h),
    )


def build_segments(labels: np.ndarray, distance: np.ndarray) -> list[Segment]:
    """Segment records (area, contour, distance maxima) for every label."""
    n_labels = int(labels.max())
    if n_labels == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n_labels + 1)
    markers = _markers_by_region(labels, distance)
    slices = ndi.find_objects(labels, max_label=n_labels)
    segments = []
    for lab in range(1, n_labels + 1):
        maxima = sorted(markers.get(lab, []), key=lambda p: (p[1], p[0]))
        segments.append(Segment(
            label=lab,
            area=int(areas[lab]),
            contour=segment_contour(labels, lab, slices[lab - 1]),
            maxima=tuple(maxima),
        ))
    return segments


def extract_centers(labels, distance, th_area: int = 64, th_dist: float = 8.0) -> SegmentationResult:
    """Reduce per-segment distance maxima to trunk positions.

    Segments smaller than ``th_area`` pixels are assumed to hold a single
    tree: all maxima collapse to their coordinate mean. Larger segments
    single-linkage-merge maxima closer than ``th_dist`` and emit one center
    per cluster. All centers are tagged "traditional".
    """
    labels = np.asarray(labels)
    distance = np.asarray(distance, dtype=np.float64)
    if labels.shape != distance.shape:
        raise ValueError(
            f"dimension mismatch: labels {labels.shape} vs distance {distance.shape}"
        )
    if th_area < 1:
        raise ValueError("th_area must be >= 1")
    if th_dist < 1:
        raise ValueError("th_dist must be >= 1")

    segments = build_segments(labels, distance)
    centers: list[TreeCenter] = []
    for seg in segments:
        maxima = list(seg.maxima)
        if not maxima:
            continue
        if seg.area < th_area:
            cx, cy = _centroid(maxima)
            centers.append(TreeCenter(x=cx, y=cy, segment_label=seg.label))
        else:
            for cluster in _single_linkage(maxima, th_dist):
                cx, cy = _centroid(cluster)
                centers.append(TreeCenter(x=cx, y=cy, segment_label=seg.label))
    return SegmentationResult(labels=labels.astype(np.int32), segments=segments, centers=centers)


def segment_mask(result: SegmentationResult) -> np.ndarray:
    """Binary foreground of a segmentation result."""
    return (result.labels > 0).astype(np.uint8)
