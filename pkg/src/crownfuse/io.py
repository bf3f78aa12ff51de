"""File formats: PNG rasters and the JSON schemas shared across stages."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .evaluation import EvalReport, GroundTruthBox
from .segmentation import VALID_SOURCES, TreeCenter
from .wbf import DetectionBox, FusedBox


class InputError(ValueError):
    """A malformed input file; carries file/field/reason for error records."""

    def __init__(self, file: str, field: str, reason: str):
        super().__init__(f"{file}: {field}: {reason}")
        self.file = str(file)
        self.field = field
        self.reason = reason


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except FileNotFoundError:
        raise InputError(path, "-", "file not found")
    except Exception as exc:  # Pillow raises various decode errors
        raise InputError(path, "-", f"cannot decode image: {exc}")


def write_image(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path)


def write_mask_png(path, mask: np.ndarray) -> None:
    """Binary mask as an 8-bit PNG, foreground stored as 255."""
    arr = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return (np.asarray(img.convert("L")) > 0).astype(np.uint8)


def write_gray_png(path, values: np.ndarray) -> None:
    """Unit-range gray map as an 8-bit PNG (round half up)."""
    arr = np.floor(np.clip(np.asarray(values, dtype=np.float64), 0, 1) * 255.0 + 0.5)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def write_unit_png16(path, values: np.ndarray) -> None:
    """Unit-range gray map as a 16-bit PNG; keeps texture maps near-lossless."""
    arr = np.floor(np.clip(np.asarray(values, dtype=np.float64), 0, 1) * 65535.0 + 0.5)
    Image.fromarray(arr.astype(np.uint16)).save(path)


def read_unit_png16(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.float64) / 65535.0


def write_labels_png(path, labels: np.ndarray) -> None:
    """Label map as a 16-bit PNG; labels above 65535 are clamped."""
    arr = np.clip(np.asarray(labels), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def read_labels_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.int32)


def _dump_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_json(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(path, "-", "file not found")
    except json.JSONDecodeError as exc:
        raise InputError(path, "-", f"malformed JSON: {exc}")
    if not isinstance(payload, dict):
        raise InputError(path, "-", "top-level value must be an object")
    return payload


def _require(payload: dict, field: str, path) -> object:
    if field not in payload:
        raise InputError(path, field, "missing required field")
    return payload[field]


def _box_entry(entry: dict, path, index: int, need_model: bool) -> dict:
    if not isinstance(entry, dict):
        raise InputError(path, f"boxes[{index}]", "box entry must be an object")
    for key in ("x1", "y1", "x2", "y2"):
        if key not in entry:
            raise InputError(path, f"boxes[{index}].{key}", "missing coordinate")
        if not isinstance(entry[key], (int, float)):
            raise InputError(path, f"boxes[{index}].{key}", "coordinate must be a number")
    if need_model and "model_id" not in entry:
        raise InputError(path, f"boxes[{index}].model_id", "missing model_id")
    return entry


def write_detections(path, image_id: str, width: int, height: int,
                     boxes: list[DetectionBox]) -> None:
    _dump_json(path, {
        "image_id": image_id,
        "width": width,
        "height": height,
        "boxes": [
            {"model_id": b.model_id, "x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2,
             "score": b.score}
            for b in boxes
        ],
    })


def read_detections(path) -> tuple[str, int, int, list[DetectionBox]]:
    payload = _load_json(path)
    image_id = str(_require(payload, "image_id", path))
    width = int(_require(payload, "width", path))
    height = int(_require(payload, "height", path))
    raw = _require(payload, "boxes", path)
    if not isinstance(raw, list):
        raise InputError(path, "boxes", "must be a list")
    boxes = []
    for i, entry in enumerate(raw):
        entry = _box_entry(entry, path, i, need_model=True)
        if "score" not in entry:
            raise InputError(path, f"boxes[{i}].score", "missing score")
        boxes.append(DetectionBox(
            model_id=int(entry["model_id"]),
            x1=float(entry["x1"]), y1=float(entry["y1"]),
            x2=float(entry["x2"]), y2=float(entry["y2"]),
            score=float(entry["score"]),
        ))
    return image_id, width, height, boxes


def write_ground_truth(path, image_id: str, width: int, height: int,
                       boxes: list[GroundTruthBox]) -> None:
    _dump_json(path, {
        "image_id": image_id,
        "width": width,
        "height": height,
        "boxes": [
            {"id": b.id, "x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2}
            for b in boxes
        ],
    })


def read_ground_truth(path) -> tuple[str, int, int, list[GroundTruthBox]]:
    payload = _load_json(path)
    image_id = str(_require(payload, "image_id", path))
    width = int(_require(payload, "width", path))
    height = int(_require(payload, "height", path))
    raw = _require(payload, "boxes", path)
    if not isinstance(raw, list):
        raise InputError(path, "boxes", "must be a list")
    boxes = []
    for i, entry in enumerate(raw):
        entry = _box_entry(entry, path, i, need_model=False)
        boxes.append(GroundTruthBox(
            x1=float(entry["x1"]), y1=float(entry["y1"]),
            x2=float(entry["x2"]), y2=float(entry["y2"]),
            id=int(entry.get("id", i)),
        ))
    return image_id, width, height, boxes


def write_fused(path, image_id: str, width: int, height: int, n_models: int,
                boxes: list[FusedBox]) -> None:
    _dump_json(path, {
        "image_id": image_id,
        "width": width,
        "height": height,
        "n_models": n_models,
        "boxes": [
            {"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2, "score": b.score,
             "cluster_size": b.cluster_size}
            for b in boxes
        ],
    })


def read_fused(path) -> tuple[str, int, int, int, list[FusedBox]]:
    payload = _load_json(path)
    image_id = str(_require(payload, "image_id", path))
    width = int(_require(payload, "width", path))
    height = int(_require(payload, "height", path))
    n_models = int(payload.get("n_models", 1))
    raw = _require(payload, "boxes", path)
    if not isinstance(raw, list):
        raise InputError(path, "boxes", "must be a list")
    boxes = []
    for i, entry in enumerate(raw):
        entry = _box_entry(entry, path, i, need_model=False)
        boxes.append(FusedBox(
            x1=float(entry["x1"]), y1=float(entry["y1"]),
            x2=float(entry["x2"]), y2=float(entry["y2"]),
            score=float(entry.get("score", 0.0)),
            cluster_size=int(entry.get("cluster_size", 1)),
            model_count=n_models,
        ))
    return image_id, width, height, n_models, boxes


def write_centers(path, image_id: str, width: int, height: int,
                  centers: list[TreeCenter]) -> None:
    _dump_json(path, {
        "image_id": image_id,
        "width": width,
        "height": height,
        "centers": [
            {"x": c.x, "y": c.y, "segment_label": c.segment_label, "source": c.source}
            for c in centers
        ],
    })


def read_centers(path) -> tuple[str, int, int, list[TreeCenter]]:
    payload = _load_json(path)
    image_id = str(_require(payload, "image_id", path))
    width = int(_require(payload, "width", path))
    height = int(_require(payload, "height", path))
    raw = _require(payload, "centers", path)
    if not isinstance(raw, list):
        raise InputError(path, "centers", "must be a list")
    centers = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "x" not in entry or "y" not in entry:
            raise InputError(path, f"centers[{i}]", "center must have x and y")
        source = entry.get("source", "traditional")
        if source not in VALID_SOURCES:
            raise InputError(path, f"centers[{i}].source", f"unknown source {source!r}")
        centers.append(TreeCenter(
            x=int(entry["x"]), y=int(entry["y"]),
            segment_label=int(entry.get("segment_label", 0)),
            source=source,
        ))
    return image_id, width, height, centers


def write_integrated(path, image_id: str, width: int, height: int,
                     centers: list[TreeCenter], boxes: list[FusedBox],
                     dropped_segments: int) -> None:
    """Integrated result: validated centers plus the accepted detector boxes."""
    _dump_json(path, {
        "image_id": image_id,
        "width": width,
        "height": height,
        "centers": [
            {"x": c.x, "y": c.y, "source": c.source}
            for c in centers
        ],
        "boxes": [
            {"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2, "score": b.score,
             "cluster_size": b.cluster_size}
            for b in boxes
        ],
        "dropped_segments": dropped_segments,
    })


def read_integrated(path) -> tuple[str, int, int, list[TreeCenter], list[FusedBox], int]:
    payload = _load_json(path)
    image_id = str(_require(payload, "image_id", path))
    width = int(_require(payload, "width", path))
    height = int(_require(payload, "height", path))
    raw_centers = _require(payload, "centers", path)
    centers = [
        TreeCenter(x=int(e["x"]), y=int(e["y"]), segment_label=int(e.get("segment_label", 0)),
                   source=e.get("source", "traditional"))
        for e in raw_centers
    ]
    boxes = []
    for i, entry in enumerate(payload.get("boxes", [])):
        entry = _box_entry(entry, path, i, need_model=False)
        boxes.append(FusedBox(
            x1=float(entry["x1"]), y1=float(entry["y1"]),
            x2=float(entry["x2"]), y2=float(entry["y2"]),
            score=float(entry.get("score", 0.0)),
            cluster_size=int(entry.get("cluster_size", 1)),
            model_count=1,
        ))
    return image_id, width, height, centers, boxes, int(payload.get("dropped_segments", 0))


def write_report(json_path, text_path, report: EvalReport) -> None:
    _dump_json(json_path, {
        "total_gt": report.total_gt,
        "detected": report.detected,
        "rate": report.rate,
        "per_image": [
            {"image_id": image_id, "gt": gt, "detected": det}
            for image_id, gt, det in report.per_image
        ],
    })
    lines = [
        f"{'image':<24}{'gt':>8}{'detected':>10}{'rate':>9}",
        "-" * 51,
    ]
    for image_id, gt, det in report.per_image:
        pct = 100.0 * det / gt if gt else 0.0
        lines.append(f"{image_id or '-':<24}{gt:>8}{det:>10}{pct:>8.1f}%")
    lines.append("-" * 51)
    lines.append(f"{'total':<24}{report.total_gt:>8}{report.detected:>10}{report.percent:>8.1f}%")
    Path(text_path).write_text("\n".join(lines) + "\n")


def draw_overlay(image: np.ndarray, boxes_px: list[tuple[float, float, float, float]],
                 centers: list[TreeCenter]) -> np.ndarray:
    """Inspection overlay: green box outlines, blue center dots, orange for
    centers validated by the local probability-map rule."""
    out = np.asarray(image, dtype=np.uint8).copy()
    h, w = out.shape[:2]
    for x1, y1, x2, y2 in boxes_px:
        ix1, iy1 = max(0, int(round(x1))), max(0, int(round(y1)))
        ix2, iy2 = min(w - 1, int(round(x2))), min(h - 1, int(round(y2)))
        out[iy1, ix1:ix2 + 1] = (0, 255, 0)
        out[iy2, ix1:ix2 + 1] = (0, 255, 0)
        out[iy1:iy2 + 1, ix1] = (0, 255, 0)
        out[iy1:iy2 + 1, ix2] = (0, 255, 0)
    for center in centers:
        color = (255, 165, 0) if center.source == "validated-local" else (0, 0, 255)
        x1, x2 = max(0, center.x - 1), min(w, center.x + 2)
        y1, y2 = max(0, center.y - 1), min(h, center.y + 2)
        out[y1:y2, x1:x2] = color
    return out
