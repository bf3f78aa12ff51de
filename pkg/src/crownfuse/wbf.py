"""Weighted boxes fusion of multi-model detections.

Boxes live in normalized image fractions. Fusion: drop low scores, cluster
by IoU against the running fused extent in descending-score order, average
coordinates weighted by confidence, then rescale each cluster's score by
min(T, N) / N for a cluster of T boxes out of N models.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Extent = tuple[float, float, float, float]


@dataclass(frozen=True)
class DetectionBox:
    """One scored rectangle from one detector, normalized coordinates."""

    model_id: int
    x1: float
    y1: float
    x2: float
    y2: float
    score: float

    @property
    def extent(self) -> Extent:
        return (self.x1, self.y1, self.x2, self.y2)

    def validate(self) -> None:
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"invalid box extent {self.extent}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class FusedBox:
    """A cluster of detections collapsed to one confidence-weighted box."""

    x1: float
    y1: float
    x2: float
    y2: float
    score: float
    cluster_size: int
    model_count: int

    @property
    def extent(self) -> Extent:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)


@dataclass(frozen=True)
class WbfConfig:
    """Fusion knobs.

    ``score_mode`` picks the cluster's raw confidence: "max" takes the best
    member score, "mean" averages members. ``count_distinct_models`` makes
    the T of the rescaling step count contributing models instead of member
    boxes.
    """

    prefilter_score: float = 0.05
    iou_cluster: float = 0.55
    model_weights: tuple[float, ...] | None = None
    score_mode: str = "max"
    count_distinct_models: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.prefilter_score < 1.0:
            raise ValueError("prefilter_score must lie in [0, 1)")
        if not 0.0 < self.iou_cluster < 1.0:
            raise ValueError("iou_cluster must lie in (0, 1)")
        if self.model_weights is not None and any(w <= 0 for w in self.model_weights):
            raise ValueError("model weights must be > 0")
        if self.score_mode not in ("max", "mean"):
            raise ValueError("score_mode must be 'max' or 'mean'")


def iou(a: Extent, b: Extent) -> float:
    """Intersection over union of two extents; 0 when disjoint."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass
class _Cluster:
    members: list[DetectionBox] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    extent: Extent = (0.0, 0.0, 0.0, 0.0)

    def add(self, box: DetectionBox, weight: float) -> None:
        self.members.append(box)
        self.weights.append(weight)
        total = sum(self.weights)
        self.extent = tuple(
            sum(w * getattr(b, coord) for b, w in zip(self.members, self.weights)) / total
            for coord in ("x1", "y1", "x2", "y2")
        )


def fuse(detections: list[DetectionBox], n_models: int, config: WbfConfig | None = None) -> list[FusedBox]:
    """Fuse detections from ``n_models`` detectors into scored boxes.

    Processing order is descending score with ties broken by model_id, then
    input index. Each box joins the first cluster whose current fused
    extent overlaps it at IoU >= ``iou_cluster``, else opens a new cluster.
    Output is sorted by descending final score.
    """
    config = config or WbfConfig()
    config.validate()
    if n_models < 1:
        raise ValueError("n_models must be >= 1")
    weights = config.model_weights or tuple(1.0 for _ in range(n_models))
    if len(weights) != n_models:
        raise ValueError(f"expected {n_models} model weights, got {len(weights)}")
    for box in detections:
        box.validate()
        if not 0 <= box.model_id < n_models:
            raise ValueError(f"model_id {box.model_id} outside 0..{n_models - 1}")

    kept = [(i, b) for i, b in enumerate(detections) if b.score >= config.prefilter_score]
    kept.sort(key=lambda ib: (-ib[1].score, ib[1].model_id, ib[0]))

    clusters: list[_Cluster] = []
    for _, box in kept:
        target = None
        for cluster in clusters:
            if iou(cluster.extent, box.extent) >= config.iou_cluster:
                target = cluster
                break
        if target is None:
            target = _Cluster()
            clusters.append(target)
        target.add(box, box.score * weights[box.model_id])

    fused: list[FusedBox] = []
    for cluster in clusters:
        scores = [b.score for b in cluster.members]
        raw = max(scores) if config.score_mode == "max" else sum(scores) / len(scores)
        if config.count_distinct_models:
            t = len({b.model_id for b in cluster.members})
        else:
            t = len(cluster.members)
        final = raw * min(t, n_models) / n_models
        x1, y1, x2, y2 = cluster.extent
        fused.append(FusedBox(x1=x1, y1=y1, x2=x2, y2=y2, score=final,
                              cluster_size=len(cluster.members), model_count=n_models))
    fused.sort(key=lambda b: -b.score)
    return fused
