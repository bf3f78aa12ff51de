"""Detection-rate arithmetic: match predictions to ground truth and report."""
from __future__ import annotations

from dataclasses import dataclass

from .segmentation import TreeCenter
from .wbf import Extent, iou


@dataclass(frozen=True)
class GroundTruthBox:
    """An annotated true tree box in normalized coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float
    id: int = 0


@dataclass(frozen=True)
class EvalReport:
    total_gt: int
    detected: int
    rate: float
    per_image: tuple[tuple[str, int, int], ...]

    @property
    def percent(self) -> float:
        return 100.0 * self.rate


def _center_inside(center: TreeCenter, box: GroundTruthBox, width: int, height: int) -> bool:
    nx = (center.x + 0.5) / width
    ny = (center.y + 0.5) / height
    return box.x1 <= nx <= box.x2 and box.y1 <= ny <= box.y2


def match_and_rate(predictions: list[TreeCenter], gt: list[GroundTruthBox],
                   width: int, height: int, image_id: str = "") -> EvalReport:
    """Greedy one-to-one matching of center predictions to ground-truth boxes.

    Ground-truth boxes are visited in input order; each counts as detected
    when the first still-unmatched prediction (in input order) falls inside
    it. ``width``/``height`` convert pixel centers to the boxes' normalized
    frame. Raises on empty ground truth.
    """
    if not gt:
        raise ValueError("no ground truth to evaluate against")
    used = [False] * len(predictions)
    detected = 0
    for box in gt:
        for i, pred in enumerate(predictions):
            if used[i]:
                continue
            if _center_inside(pred, box, width, height):
                used[i] = True
                detected += 1
                break
    total = len(gt)
    return EvalReport(total_gt=total, detected=detected, rate=detected / total,
                      per_image=((image_id, total, detected),))


def match_boxes_and_rate(predictions: list[Extent], gt: list[GroundTruthBox],
                         iou_min: float = 0.5, image_id: str = "") -> EvalReport:
    """Box-only variant: a ground-truth box matches the first unmatched
    prediction overlapping it at IoU >= ``iou_min``."""
    if not gt:
        raise ValueError("no ground truth to evaluate against")
    used = [False] * len(predictions)
    detected = 0
    for box in gt:
        gt_extent = (box.x1, box.y1, box.x2, box.y2)
        for i, pred in enumerate(predictions):
            if used[i]:
                continue
            if iou(pred, gt_extent) >= iou_min:
                used[i] = True
                detected += 1
                break
    total = len(gt)
    return EvalReport(total_gt=total, detected=detected, rate=detected / total,
                      per_image=((image_id, total, detected),))


def combine_reports(reports: list[EvalReport]) -> EvalReport:
    """Reduce per-image reports into one aggregate."""
    if not reports:
        raise ValueError("no ground truth to evaluate against")
    total = sum(r.total_gt for r in reports)
    detected = sum(r.detected for r in reports)
    per_image = tuple(entry for r in reports for entry in r.per_image)
    return EvalReport(total_gt=total, detected=detected, rate=detected / total,
                      per_image=per_image)
