"""Synthetic forest scenes with exact ground truth, plus simulated detectors.

Rendered crowns are green disks with radial intensity falloff and seeded
per-pixel noise (texture for the Gabor stage) on a flat non-green
background; everything is bit-deterministic under a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluation import GroundTruthBox
from .wbf import DetectionBox

Crown = tuple[int, int, int, int]  # (cx, cy, radius, green intensity)

# Low-saturation greenish soil: fails the color invariant's sat floor, so it
# reads as background while staying photometrically close to crown rims.
DEFAULT_BACKGROUND = (96, 104, 92)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    crowns: tuple[Crown, ...]
    background: tuple[int, int, int] = DEFAULT_BACKGROUND
    clutter: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be >= 1")
        if self.clutter < 0:
            raise ValueError("clutter count must be >= 0")
        for cx, cy, radius, intensity in self.crowns:
            if radius < 2:
                raise ValueError(f"crown radius {radius} < 2")
            if not (radius <= cx <= self.width - 1 - radius
                    and radius <= cy <= self.height - 1 - radius):
                raise ValueError(f"crown outside bounds: ({cx}, {cy}, r={radius})")
            if not 1 <= intensity <= 255:
                raise ValueError(f"crown intensity {intensity} outside 1..255")


def render_scene(spec: SceneSpec) -> tuple[np.ndarray, list[GroundTruthBox]]:
    """Render a scene and its tight normalized ground-truth boxes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    image = np.empty((h, w, 3), dtype=np.float64)
    image[..., 0] = spec.background[0]
    image[..., 1] = spec.background[1]
    image[..., 2] = spec.background[2]

    gt: list[GroundTruthBox] = []
    for idx, (cx, cy, radius, intensity) in enumerate(spec.crowns):
        x0, x1 = cx - radius, cx + radius
        y0, y1 = cy - radius, cy + radius
        yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        inside = d2 <= radius * radius
        falloff = 1.0 - 0.45 * d2 / (radius * radius)
        noise = rng.normal(0.0, 12.0, size=inside.shape)
        green = np.clip(intensity * falloff + noise, 64, 255)
        # Channel ratios keep the rim step against the background gentle; the
        # interior noise, not the disk edge, should dominate texture response.
        red = np.clip(0.62 * green + rng.normal(0.0, 5.0, size=inside.shape), 8, 250)
        blue = np.clip(0.55 * green + rng.normal(0.0, 5.0, size=inside.shape), 8, 250)
        # Keep green strictly dominant so the color invariant holds everywhere.
        red = np.minimum(red, green - 8)
        blue = np.minimum(blue, green - 8)
        patch = image[y0:y1 + 1, x0:x1 + 1]
        patch[..., 0] = np.where(inside, red, patch[..., 0])
        patch[..., 1] = np.where(inside, green, patch[..., 1])
        patch[..., 2] = np.where(inside, blue, patch[..., 2])
        gt.append(GroundTruthBox(
            x1=x0 / w, y1=y0 / h, x2=(x1 + 1) / w, y2=(y1 + 1) / h, id=idx,
        ))

    for _ in range(spec.clutter):
        sx = int(rng.integers(0, w))
        sy = int(rng.integers(0, h))
        size = int(rng.integers(1, 3))  # speckles of at most 2 px extent
        level = float(rng.uniform(90, 160))
        ex, ey = min(w, sx + size), min(h, sy + size)
        image[sy:ey, sx:ex, 0] = 0.4 * level
        image[sy:ey, sx:ex, 1] = level
        image[sy:ey, sx:ex, 2] = 0.3 * level

    return np.clip(np.floor(image + 0.5), 0, 255).astype(np.uint8), gt


def random_scene_spec(width: int, height: int, n_crowns: int, seed: int,
                      radius_range: tuple[int, int] = (5, 15),
                      intensity_range: tuple[int, int] = (140, 230),
                      clutter: int = 0,
                      background: tuple[int, int, int] = DEFAULT_BACKGROUND,
                      margin: int = 16,
                      max_tries: int = 20000) -> SceneSpec:
    """Place ``n_crowns`` disks with center separation >= 2 * max radius + 4.

    ``margin`` keeps crowns away from the image border (reflect-padded
    texture filtering doubles edge energy there). Placement is rejection
    sampling under the scene seed, so specs are reproducible. Raises when
    the crowns cannot be packed.
    """
    rng = np.random.default_rng(seed)
    radii = [int(rng.integers(radius_range[0], radius_range[1] + 1)) for _ in range(n_crowns)]
    intensities = [int(rng.integers(intensity_range[0], intensity_range[1] + 1))
                   for _ in range(n_crowns)]
    min_sep = 2 * (max(radii) if radii else 0) + 4
    placed: list[Crown] = []
    tries = 0
    for radius, intensity in zip(radii, intensities):
        while True:
            tries += 1
            if tries > max_tries:
                raise ValueError(f"could not place {n_crowns} crowns in {width}x{height}")
            cx = int(rng.integers(radius + margin, width - radius - margin))
            cy = int(rng.integers(radius + margin, height - radius - margin))
            if all((cx - px) ** 2 + (cy - py) ** 2 >= min_sep * min_sep
                   for px, py, _, _ in placed):
                placed.append((cx, cy, radius, intensity))
                break
    return SceneSpec(width=width, height=height, crowns=tuple(placed),
                     background=background, clutter=clutter, seed=seed)


def simulate_detections(gt: list[GroundTruthBox], n_models: int, drop_rate: float,
                        jitter: float, seed: int) -> list[DetectionBox]:
    """Stand-in detector outputs: per model, drop boxes with probability
    ``drop_rate``, jitter surviving coordinates by up to ``jitter`` of the
    box size, and score from U[0.7, 1.0] (biased above the 0.8 acceptance
    threshold). Deterministic under the seed.
    """
    if not 0.0 <= drop_rate < 1.0:
        raise ValueError("drop_rate must lie in [0, 1)")
    if not 0.0 <= jitter < 0.5:
        raise ValueError("jitter must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    out: list[DetectionBox] = []
    for model_id in range(n_models):
        for box in gt:
            if rng.random() < drop_rate:
                continue
            bw = box.x2 - box.x1
            bh = box.y2 - box.y1
            dx1, dx2 = rng.uniform(-jitter, jitter, 2) * bw
            dy1, dy2 = rng.uniform(-jitter, jitter, 2) * bh
            score = float(rng.uniform(0.7, 1.0))
            out.append(DetectionBox(
                model_id=model_id,
                x1=max(0.0, box.x1 + dx1),
                y1=max(0.0, box.y1 + dy1),
                x2=min(1.0, box.x2 + dx2),
                y2=min(1.0, box.y2 + dy2),
                score=score,
            ))
    return out
