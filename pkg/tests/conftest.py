import numpy as np
import pytest


def disk_mask(shape, disks):
    """Binary mask with one disk per (cx, cy, r)."""
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    mask = np.zeros(shape, dtype=bool)
    for cx, cy, r in disks:
        mask |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return mask.astype(np.uint8)


def brute_force_distance(mask):
    """All-pairs city-block distance to background, border counts as background."""
    from scipy.spatial.distance import cdist

    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    out = np.zeros((h, w), dtype=np.float64)
    fg = np.argwhere(m)
    if len(fg) == 0:
        return out
    bg = np.argwhere(~m)
    border = np.minimum.reduce([
        fg[:, 0] + 1, fg[:, 1] + 1, h - fg[:, 0], w - fg[:, 1],
    ]).astype(np.float64)
    if len(bg):
        inner = cdist(fg, bg, metric="cityblock").min(axis=1)
        dist = np.minimum(inner, border)
    else:
        dist = border
    out[fg[:, 0], fg[:, 1]] = dist
    return out


def brute_force_otsu(values):
    """Exhaustive 256-way threshold search straight from raw pixel values."""
    v = np.floor(np.asarray(values, dtype=np.float64).ravel() + 0.5)
    best_t, best_var = None, 0.0
    for t in range(256):
        lo = v[v < t]
        hi = v[v >= t]
        if len(lo) == 0 or len(hi) == 0:
            continue
        var = len(lo) * len(hi) * (lo.mean() - hi.mean()) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


@pytest.fixture
def rng():
    return np.random.default_rng(0)
