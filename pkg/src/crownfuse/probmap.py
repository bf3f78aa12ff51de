"""Joint crown-probability map and the binary candidate mask derived from it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import as_binary_mask, morphological_open, otsu_threshold


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel crown likelihood in [0, 1] plus the weights that built it."""

    values: np.ndarray
    weights: tuple[float, float]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def joint_probability_map(color_map, texture_map, w1: float = 0.5, w2: float = 0.5) -> ProbabilityMap:
    """Convex combination of the binary color map and the unit texture map.

    Weights must be non-negative and sum to 1 (both default to 0.5).
    """
    c = as_binary_mask(color_map).astype(np.float64)
    g = np.asarray(texture_map, dtype=np.float64)
    if c.shape != g.shape:
        raise ValueError(f"dimension mismatch: color {c.shape} vs texture {g.shape}")
    if w1 < 0 or w2 < 0 or abs(w1 + w2 - 1.0) > 1e-9:
        raise ValueError("weights must be >= 0 and sum to 1")
    if g.size and (g.min() < -1e-9 or g.max() > 1.0 + 1e-9):
        raise ValueError("texture map is not unit-normalized")
    values = np.clip(w1 * c + w2 * g, 0.0, 1.0)
    return ProbabilityMap(values=values, weights=(w1, w2))


def to_u8(prob: ProbabilityMap) -> np.ndarray:
    """Scale a unit map to the 0..255 range, rounding half up."""
    return np.floor(prob.values * 255.0 + 0.5).astype(np.uint8)


def candidate_mask(prob: ProbabilityMap, open_radius: int = 1, open_iterations: int = 2) -> np.ndarray:
    """Binary crown-candidate mask: scale to u8, Otsu, strict > t, then open.

    Propagates the "degenerate histogram" error on constant maps.
    """
    scaled = to_u8(prob)
    t = otsu_threshold(scaled)
    mask = (scaled > t).astype(np.uint8)
    return morphological_open(mask, radius=open_radius, iterations=open_iterations)
