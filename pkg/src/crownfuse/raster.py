"""Low-level pixel-grid primitives shared by every pipeline stage.

Array conventions used throughout the package:

* RGB rasters are ``uint8`` arrays of shape ``(height, width, 3)``,
  origin top-left, x = column (rightward), y = row (downward).
* Gray maps are 2-D float arrays. "u8-normalized" maps hold values in
  [0, 255]; "unit" maps hold values in [0, 1].
* Binary masks are 2-D ``uint8`` arrays over {0, 1}.
* Label maps are 2-D ``int32`` arrays; 0 is background, labels run 1..L
  contiguously, numbered by raster order of each region's first pixel.
* Points are (x, y) tuples.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

# Row-major neighbor order; used wherever 8-connectivity is scanned.
EIGHT_NEIGHBORS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)

# Clockwise 8-neighbor ring starting East, in (row, col) offsets. Screen
# coordinates (y down), so E -> SE -> S is a clockwise sweep.
_RING = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_RING_INDEX = {off: k for k, off in enumerate(_RING)}


@dataclass(frozen=True)
class Contour:
    """Outer boundary of one connected region.

    ``points`` is the ordered trace of boundary pixels as (x, y) tuples;
    consecutive points are 8-adjacent. ``bounding_rect`` is the tight
    (x, y, w, h) rectangle enclosing the trace.
    """

    points: tuple[tuple[int, int], ...]
    bounding_rect: tuple[int, int, int, int]

    @property
    def width(self) -> int:
        return self.bounding_rect[2]

    @property
    def height(self) -> int:
        return self.bounding_rect[3]


def as_binary_mask(mask) -> np.ndarray:
    """Validate and return a {0,1} uint8 mask as a boolean array."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"binary mask must be 2-D, got shape {m.shape}")
    if m.size and not np.isin(m, (0, 1)).all():
        raise ValueError("binary mask values must be 0 or 1")
    return m.astype(bool)


def round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def disk_element(radius: int) -> np.ndarray:
    """Disk structuring element; radius 1 spans the full 3x3 neighborhood."""
    r = int(radius)
    if r < 1:
        raise ValueError("structuring element radius must be >= 1")
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= (r + 0.5) ** 2


def otsu_threshold(gray) -> int:
    """Smallest threshold t maximizing between-class variance.

    The 256-bin histogram is split into {v < t} and {v >= t}. Values are
    rounded half-up before binning and must fall in [0, 255]. Raises
    ValueError("degenerate histogram") when no split separates two
    non-empty classes (constant input).
    """
    values = np.asarray(gray, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot threshold an empty map")
    binned = np.floor(values + 0.5).astype(np.int64)
    if binned.min() < 0 or binned.max() > 255:
        raise ValueError("map is not u8-normalized (values outside [0, 255])")
    hist = np.bincount(binned.ravel(), minlength=256).astype(np.int64)
    total_count = int(hist.sum())
    weighted = hist * np.arange(256, dtype=np.int64)
    total_sum = int(weighted.sum())

    best_t = -1
    best_var = 0.0
    count_lo = 0
    sum_lo = 0
    for t in range(1, 256):
        count_lo += int(hist[t - 1])
        sum_lo += int(weighted[t - 1])
        count_hi = total_count - count_lo
        if count_lo == 0 or count_hi == 0:
            continue
        mean_lo = sum_lo / count_lo
        mean_hi = (total_sum - sum_lo) / count_hi
        var = count_lo * count_hi * (mean_lo - mean_hi) ** 2
        if var > best_var:
            best_var = var
            best_t = t
    if best_t < 0:
        raise ValueError("degenerate histogram: map has a single gray level")
    return best_t


def morphological_open(mask, radius: int = 1, iterations: int = 1) -> np.ndarray:
    """Open a mask with a disk: erode ``iterations`` times, then dilate as many.

    Pixels beyond the image border count as background, so foreground
    touching the border erodes inward and dilation never extends past it.
    """
    m = as_binary_mask(mask)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    se = disk_element(radius)
    if not m.any():
        return np.zeros(m.shape, dtype=np.uint8)
    eroded = ndi.binary_erosion(m, structure=se, iterations=iterations, border_value=0)
    opened = ndi.binary_dilation(eroded, structure=se, iterations=iterations, border_value=0)
    return opened.astype(np.uint8)


def distance_transform(mask) -> np.ndarray:
    """City-block distance to the nearest background pixel (two-pass chamfer).

    The image border counts as adjacent to implicit background, so edge
    foreground has distance 1. Background pixels map to 0.
    """
    m = as_binary_mask(mask)
    h, w = m.shape
    if m.size == 0:
        return np.zeros(m.shape, dtype=np.float64)
    inf = h + w + 2
    d = np.zeros((h + 2, w + 2), dtype=np.int64)
    d[1:-1, 1:-1] = np.where(m, inf, 0)
    cols = np.arange(w + 2, dtype=np.int64)
    # Forward pass: relax from north, then propagate the full west chain
    # per row via min_{k<=j}(v[k] - k) + j.
    for i in range(1, h + 2):
        np.minimum(d[i], d[i - 1] + 1, out=d[i])
        d[i] = np.minimum.accumulate(d[i] - cols) + cols
    # Backward pass: relax from south, then the east chain.
    for i in range(h, -1, -1):
        np.minimum(d[i], d[i + 1] + 1, out=d[i])
        rev = np.minimum.accumulate((d[i] + cols)[::-1])
        d[i] = rev[::-1] - cols
    return d[1:-1, 1:-1].astype(np.float64)


def _renumber_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber labels 1..L by raster order of each region's first pixel."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    keep = uniq > 0
    uniq, first = uniq[keep], first[keep]
    order = np.argsort(first, kind="stable")
    lut = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    lut[uniq[order]] = np.arange(1, len(uniq) + 1, dtype=np.int32)
    return lut[labels]


def connected_components(mask) -> np.ndarray:
    """8-connectivity labeling; labels follow raster order of first pixels."""
    m = as_binary_mask(mask)
    labeled, count = ndi.label(m, structure=np.ones((3, 3), dtype=bool))
    labeled = labeled.astype(np.int32)
    if count == 0:
        return labeled
    return _renumber_labels(labeled)


def _follow_border(f: np.ndarray, i: int, j: int, i2: int, j2: int, nbd: int):
    """Suzuki-Abe border following from start pixel (i, j).

    Marks visited border pixels in ``f`` with +/-nbd and returns the traced
    point sequence in padded (row, col) coordinates.
    """
    # Step 3.1: clockwise search around (i, j) starting from (i2, j2).
    d0 = _RING_INDEX[(i2 - i, j2 - j)]
    first = None
    for k in range(8):
        di, dj = _RING[(d0 + k) % 8]
        if f[i + di, j + dj] != 0:
            first = (i + di, j + dj)
            break
    if first is None:
        f[i, j] = -nbd
        return [(i, j)]

    i1, j1 = first
    pi2, pj2 = i1, j1
    pi3, pj3 = i, j
    points = []
    while True:
        # Step 3.3: counterclockwise search around (i3, j3) starting just
        # after (i2, j2); remember whether the East neighbor was examined
        # while zero.
        d = _RING_INDEX[(pi2 - pi3, pj2 - pj3)]
        east_zero = False
        pi4 = pj4 = -1
        for k in range(1, 9):
            di, dj = _RING[(d - k) % 8]
            if f[pi3 + di, pj3 + dj] != 0:
                pi4, pj4 = pi3 + di, pj3 + dj
                break
            if (di, dj) == (0, 1):
                east_zero = True
        # Step 3.4: mark the current border pixel.
        if east_zero:
            f[pi3, pj3] = -nbd
        elif f[pi3, pj3] == 1:
            f[pi3, pj3] = nbd
        points.append((pi3, pj3))
        # Step 3.5: stop when the trace returns to the start the same way.
        if (pi4, pj4) == (i, j) and (pi3, pj3) == (i1, j1):
            return points
        pi2, pj2 = pi3, pj3
        pi3, pj3 = pi4, pj4


def _contour_from(points_rc) -> Contour:
    xs = [c - 1 for _, c in points_rc]
    ys = [r - 1 for r, _ in points_rc]
    x0, y0 = min(xs), min(ys)
    rect = (x0, y0, max(xs) - x0 + 1, max(ys) - y0 + 1)
    return Contour(points=tuple(zip(xs, ys)), bounding_rect=rect)


def find_contours(mask) -> list[Contour]:
    """Outer contours of 8-connected components via Suzuki-Abe following.

    Hole borders are traced internally (to keep the bookkeeping exact) but
    not reported. Contours come out in raster order of their topmost-left
    border pixel, matching connected_components numbering.
    """
    m = as_binary_mask(mask)
    h, w = m.shape
    if m.size == 0 or not m.any():
        return []
    f = np.zeros((h + 2, w + 2), dtype=np.int32)
    f[1:-1, 1:-1] = m
    contours: list[Contour] = []
    nbd = 1
    for i in range(1, h + 1):
        row = f[i]
        # Candidate columns; a trace can only invalidate candidates, never
        # create them, so this row snapshot is a safe superset.
        cand = np.nonzero(
            ((row[1:w + 1] == 1) & (row[0:w] == 0))
            | ((row[1:w + 1] >= 1) & (row[2:w + 2] == 0))
        )[0]
        for c in cand:
            j = int(c) + 1
            if f[i, j] == 1 and f[i, j - 1] == 0:
                nbd += 1
                contours.append(_contour_from(_follow_border(f, i, j, i, j - 1, nbd)))
            elif f[i, j] >= 1 and f[i, j + 1] == 0:
                nbd += 1
                _follow_border(f, i, j, i, j + 1, nbd)
    return contours


def local_maxima(gray, min_value: float = 0.0) -> list[tuple[int, int]]:
    """Pixels strictly greater than every in-image 8-neighbor and >= min_value.

    Plateau pixels (any equal neighbor) are excluded. Results are in raster
    order as (x, y) tuples.
    """
    if min_value < 0:
        raise ValueError("min_value must be >= 0")
    g = np.asarray(gray, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {g.shape}")
    if g.size == 0:
        return []
    padded = np.pad(g, 1, constant_values=-np.inf)
    h, w = g.shape
    strict = g >= min_value
    for di, dj in EIGHT_NEIGHBORS:
        strict &= g > padded[1 + di:1 + di + h, 1 + dj:1 + dj + w]
    ys, xs = np.nonzero(strict)
    return [(int(x), int(y)) for y, x in zip(ys, xs)]


def flood_labels(mask: np.ndarray, relief: np.ndarray, markers) -> np.ndarray:
    """Priority-flood labeling of a mask from labeled marker pixels.

    Flooding proceeds highest-relief first over 8-connected foreground;
    ties are broken by insertion order (markers enter in the given order,
    neighbors in row-major order), which makes the result deterministic.

    ``markers`` is an iterable of ((x, y), label) pairs.
    """
    m = as_binary_mask(mask)
    h, w = m.shape
    out = np.zeros((h, w), dtype=np.int32)
    heap: list[tuple[float, int, int, int]] = []
    seq = 0
    for (x, y), label in markers:
        out[y, x] = label
        heapq.heappush(heap, (-float(relief[y, x]), seq, x, y))
        seq += 1
    while heap:
        _, _, x, y = heapq.heappop(heap)
        label = out[y, x]
        for di, dj in EIGHT_NEIGHBORS:
            ny, nx = y + di, x + dj
            if 0 <= ny < h and 0 <= nx < w and m[ny, nx] and out[ny, nx] == 0:
                out[ny, nx] = label
                heapq.heappush(heap, (-float(relief[ny, nx]), seq, nx, ny))
                seq += 1
    return out
