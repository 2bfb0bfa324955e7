"""Reference image-quality metrics on numpy arrays in [0, 1], CHW layout.

The structural-similarity implementation is the canonical one: 11x11
Gaussian window (sigma 1.5), stability constants K1=0.01 / K2=0.03 at
dynamic range 1, valid-mode windowing (no padded borders), channels scored
independently and averaged. The differentiable loss-side copy in
``training`` reuses ``gaussian_window`` so the two agree to float precision.
"""

from __future__ import annotations

import numpy as np

__all__ = ["psnr", "ssim", "gaussian_window", "SSIM_WINDOW", "SSIM_SIGMA", "SSIM_K1", "SSIM_K2", "PSNR_CAP"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 100.0


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is its outer product."""
    offsets = np.arange(size) - (size - 1) / 2.0
    taps = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return taps / taps.sum()


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 (identical inputs)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP))


def _filter_valid(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2-D plane with taps x taps."""
    k = taps.size
    rows = np.lib.stride_tricks.sliding_window_view(plane, k, axis=0) @ taps
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ taps


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over channels; 1.0 iff inputs identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    taps = gaussian_window()
    c1 = SSIM_K1 * SSIM_K1
    c2 = SSIM_K2 * SSIM_K2
    scores = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        mx = _filter_valid(x, taps)
        my = _filter_valid(y, taps)
        mxx = _filter_valid(x * x, taps)
        myy = _filter_valid(y * y, taps)
        mxy = _filter_valid(x * y, taps)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        score = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        scores.append(score.mean())
    return float(np.mean(scores))
