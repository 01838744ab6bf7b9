"""Frame quality metrics on [0, 1] RGB arrays shaped (3, H, W)."""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

PSNR_CAP = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame dims differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """10 log10(1 / MSE), capped at 100 dB for identical frames."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ms_ssim_scales(h: int, w: int, max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    """Scale count for an ``h`` x ``w`` frame: n scales need sides of at
    least (window - 1) * 2^(n - 1), i.e. 160 px for the full 5."""
    n = 1
    while n < max_scales and min(h, w) >= (WINDOW - 1) << n:
        n += 1
    return n


def _window_for(h: int, w: int) -> np.ndarray:
    # levels smaller than the window use a window shrunk to fit
    size = min(WINDOW, h, w)
    return gaussian_window(size, WINDOW_SIGMA * size / WINDOW)


def _filter_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    full = ndimage.correlate(x, win, mode="constant")
    k = win.shape[0]
    r = (k - 1) // 2
    return full[r : r + x.shape[0] - k + 1, r : r + x.shape[1] - k + 1]


def _ssim_terms(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> tuple[float, float]:
    c1, c2 = K1**2, K2**2
    mx, my = _filter_valid(x, win), _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _down2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b) -> float:
    """Multi-scale SSIM averaged over channels.

    Uses 5 scales when both sides are at least 160 px; smaller frames use
    fewer scales with the leading weights renormalised. Negative
    contrast-structure terms are clipped to zero before the weighted product.
    """
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    n = ms_ssim_scales(*a.shape[1:])
    if n < len(MS_SSIM_WEIGHTS):
        log.info("ms_ssim: %dx%d frame, using %d scales", a.shape[1], a.shape[2], n)
    weights = np.array(MS_SSIM_WEIGHTS[:n])
    weights /= weights.sum()
    scores = []
    for x, y in zip(a, b):
        terms = []
        for s in range(n):
            ssim, cs = _ssim_terms(x, y, _window_for(*x.shape))
            terms.append(ssim if s == n - 1 else cs)
            if s < n - 1:
                x, y = _down2(x), _down2(y)
        terms = np.maximum(np.array(terms), 0.0)
        scores.append(float(np.prod(terms**weights)))
    return float(np.mean(scores))
