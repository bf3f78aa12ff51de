"""Per-pixel crown features: green color invariance and Gabor texture."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as spfft

# sigma * frequency for a given half-response bandwidth in octaves.
_BANDWIDTH_COEFF = math.sqrt(math.log(2.0) / 2.0) / math.pi

DEFAULT_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
# sqrt(2) * 2^k cycles per reference width, k = 2..5: uniform octave coverage.
DEFAULT_FREQUENCIES = tuple(math.sqrt(2.0) * 2.0 ** k for k in (2, 3, 4, 5))


@dataclass(frozen=True)
class GreenDominanceSpec:
    """Hue window plus saturation/value floors defining "green dominant"."""

    hue_min: float = 60.0
    hue_max: float = 180.0
    sat_min: float = 0.2
    val_min: float = 0.2

    def validate(self) -> None:
        if not 0.0 <= self.hue_min < self.hue_max < 360.0:
            raise ValueError("require 0 <= hue_min < hue_max < 360")
        if not (0.0 <= self.sat_min <= 1.0 and 0.0 <= self.val_min <= 1.0):
            raise ValueError("sat_min and val_min must lie in [0, 1]")


@dataclass(frozen=True)
class GaborBankSpec:
    """Bank layout: orientations x radial frequencies, one kernel per pair.

    Frequencies are in cycles per ``reference_width`` pixels (the default
    256 matches the processing tile width). ``channel_mode`` selects whether
    responses are taken per color channel ("per-channel") or on the channel
    average ("luminance").
    """

    orientations: tuple[float, ...] = DEFAULT_ORIENTATIONS
    radial_frequencies: tuple[float, ...] = DEFAULT_FREQUENCIES
    bandwidth: float = 1.0
    kernel_truncation: float = 3.0
    reference_width: int = 256
    channel_mode: str = "per-channel"

    def validate(self) -> None:
        if not self.orientations or not self.radial_frequencies:
            raise ValueError("orientations and radial_frequencies must be non-empty")
        freqs = tuple(self.radial_frequencies)
        if any(f <= 0 for f in freqs):
            raise ValueError("radial frequencies must be strictly positive")
        if any(b >= a for a, b in zip(freqs[1:], freqs[:-1])):
            raise ValueError("radial frequencies must be strictly increasing")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0 octaves")
        if self.kernel_truncation <= 0:
            raise ValueError("kernel_truncation must be > 0")
        if self.reference_width < 1:
            raise ValueError("reference_width must be >= 1")
        if self.channel_mode not in ("per-channel", "luminance"):
            raise ValueError("channel_mode must be 'per-channel' or 'luminance'")


@dataclass(frozen=True)
class GaborKernel:
    """One even-symmetric, DC-compensated kernel of the bank."""

    weights: np.ndarray
    orientation: float  # degrees; direction of intensity variation from +x
    frequency: float  # cycles per pixel
    sigma: float


def rgb_to_hsv(image) -> np.ndarray:
    """Hexcone RGB -> HSV conversion.

    Input is a uint8 (H, W, 3) raster; output is float64 (H, W, 3) with hue
    in degrees [0, 360), saturation and value in [0, 1]. Hue is 0 wherever
    saturation is 0.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) raster, got shape {img.shape}")
    rgb = img.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    diff = mx - mn

    val = mx
    sat = np.zeros_like(mx)
    np.divide(diff, mx, out=sat, where=mx > 0)

    hue = np.zeros_like(mx)
    nz = diff > 0
    safe = np.where(nz, diff, 1.0)
    r_max = nz & (mx == r)
    g_max = nz & (mx == g) & ~r_max
    b_max = nz & ~r_max & ~g_max
    hue[r_max] = (60.0 * (g - b)[r_max] / safe[r_max]) % 360.0
    hue[g_max] = 60.0 * (2.0 + (b - r)[g_max] / safe[g_max])
    hue[b_max] = 60.0 * (4.0 + (r - g)[b_max] / safe[b_max])
    return np.stack([hue, sat, val], axis=-1)


def green_dominance_map(image, spec: GreenDominanceSpec | None = None) -> np.ndarray:
    """Binary map: 1 where hue falls in the green window and sat/val clear their floors."""
    spec = spec or GreenDominanceSpec()
    spec.validate()
    hsv = rgb_to_hsv(image)
    hue, sat, val = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    dominant = (
        (hue >= spec.hue_min)
        & (hue <= spec.hue_max)
        & (sat >= spec.sat_min)
        & (val >= spec.val_min)
    )
    return dominant.astype(np.uint8)


def gabor_bank(spec: GaborBankSpec | None = None) -> list[GaborKernel]:
    """Build the even-symmetric kernel bank described by ``spec``.

    The Gaussian envelope sigma follows from the octave bandwidth; kernels
    are truncated at ``kernel_truncation * sigma`` and mean-subtracted so a
    constant image yields zero response.
    """
    spec = spec or GaborBankSpec()
    spec.validate()
    kernels: list[GaborKernel] = []
    coeff = _BANDWIDTH_COEFF * (2.0 ** spec.bandwidth + 1.0) / (2.0 ** spec.bandwidth - 1.0)
    for orientation in spec.orientations:
        theta = math.radians(orientation)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        for cycles in spec.radial_frequencies:
            freq = cycles / spec.reference_width
            sigma = coeff / freq
            if sigma < 1.0:
                raise ValueError(
                    f"frequency too high for raster: {cycles} cycles per "
                    f"{spec.reference_width} px implies sigma {sigma:.3f} < 1"
                )
            half = int(math.ceil(spec.kernel_truncation * sigma))
            y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
            rotated = x * cos_t + y * sin_t
            weights = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
            weights *= np.cos(2.0 * math.pi * freq * rotated)
            weights -= weights.mean()
            kernels.append(GaborKernel(weights=weights, orientation=orientation,
                                       frequency=freq, sigma=sigma))
    return kernels


def kernel_response(plane: np.ndarray, kernel: GaborKernel) -> np.ndarray:
    """Response of one kernel on a single plane, reflect-padded borders.

    Output has the plane's shape. Kernels are even-symmetric, so
    convolution and correlation coincide.
    """
    from scipy.signal import fftconvolve

    half = kernel.weights.shape[0] // 2
    p = np.asarray(plane, dtype=np.float64)
    if p.shape[0] < kernel.weights.shape[0] or p.shape[1] < kernel.weights.shape[1]:
        raise ValueError("image too small for the requested kernel")
    padded = np.pad(p, half, mode="reflect")
    return fftconvolve(padded, kernel.weights, mode="valid")


def _grouped_responses(planes: list[np.ndarray], kernels: list[GaborKernel]) -> np.ndarray:
    """Sum of |response| over planes and kernels, FFT-batched per kernel size."""
    h, w = planes[0].shape
    acc = np.zeros((h, w), dtype=np.float32)
    groups: dict[int, list[GaborKernel]] = {}
    for k in kernels:
        groups.setdefault(k.weights.shape[0], []).append(k)
    for size in sorted(groups):
        half = size // 2
        fft_shape = (
            spfft.next_fast_len(h + 4 * half, real=True),
            spfft.next_fast_len(w + 4 * half, real=True),
        )
        padded = np.stack([np.pad(p, half, mode="reflect") for p in planes])
        plane_f = spfft.rfft2(padded, s=fft_shape, workers=-1)
        weights = np.stack([k.weights.astype(np.float32) for k in groups[size]])
        kernel_f = spfft.rfft2(weights, s=fft_shape, workers=-1)
        conv = spfft.irfft2(plane_f[:, None] * kernel_f[None, :], s=fft_shape, workers=-1)
        region = conv[..., 2 * half:2 * half + h, 2 * half:2 * half + w]
        acc += np.abs(region).sum(axis=(0, 1))
    return acc


def gabor_feature_map(image, spec: GaborBankSpec | None = None) -> np.ndarray:
    """Average Gabor response magnitude per pixel, min-max scaled to [0, 1].

    Every color channel is convolved (reflect-padded) with every bank
    kernel; magnitudes are averaged over kernels and channels. A constant
    image maps to all zeros.
    """
    spec = spec or GaborBankSpec()
    kernels = gabor_bank(spec)
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) raster, got shape {img.shape}")
    h, w = img.shape[:2]
    max_size = max(k.weights.shape[0] for k in kernels)
    if h < max_size or w < max_size:
        raise ValueError(
            f"image too small for Gabor bank: {w}x{h} vs largest kernel {max_size}"
        )

    rgb = img.astype(np.float32) / 255.0
    if spec.channel_mode == "luminance":
        planes = [rgb.mean(axis=-1)]
    else:
        planes = [rgb[..., c] for c in range(3)]
    # Constant planes contribute exactly zero (kernels are DC-compensated);
    # skipping them keeps the flat-image case bit-exact.
    active = [p for p in planes if p.min() != p.max()]
    count = len(planes) * len(kernels)
    if active:
        acc = _grouped_responses(active, kernels)
    else:
        acc = np.zeros((h, w), dtype=np.float32)

    feature = acc.astype(np.float64) / count
    lo = float(feature.min())
    hi = float(feature.max())
    if hi - lo < 1e-12:
        return np.zeros((h, w), dtype=np.float64)
    return (feature - lo) / (hi - lo)
