"""Bjøntegaard delta rate between two rate-distortion curves."""

from __future__ import annotations

import numpy as np


class BDRateError(ValueError):
    pass


def _prepare(rate, quality):
    rate = np.asarray(rate, dtype=np.float64)
    quality = np.asarray(quality, dtype=np.float64)
    if rate.ndim != 1 or rate.shape != quality.shape:
        raise BDRateError("rate and quality must be 1-D and equal length")
    if rate.size < 4:
        raise BDRateError(f"need at least 4 points per curve, got {rate.size}")
    if np.any(rate <= 0):
        raise BDRateError("rates must be positive")
    return np.log(rate), quality


def _overlap(q_a, q_b):
    lo = max(q_a.min(), q_b.min())
    hi = min(q_a.max(), q_b.max())
    if not hi > lo:
        raise BDRateError(f"quality ranges do not overlap ([{q_a.min()}, {q_a.max()}] vs [{q_b.min()}, {q_b.max()}])")
    return lo, hi


def bd_rate(anchor_rate, anchor_quality, test_rate, test_quality) -> float:
    """Average rate difference of ``test`` against ``anchor`` in percent.

    Log-rate is fitted as a cubic in quality for each curve and both fits are
    integrated over the common quality interval. Negative favours ``test``.
    """
    lr_a, q_a = _prepare(anchor_rate, anchor_quality)
    lr_t, q_t = _prepare(test_rate, test_quality)
    lo, hi = _overlap(q_a, q_t)
    p_a = np.polyint(np.polyfit(q_a, lr_a, 3))
    p_t = np.polyint(np.polyfit(q_t, lr_t, 3))
    int_a = np.polyval(p_a, hi) - np.polyval(p_a, lo)
    int_t = np.polyval(p_t, hi) - np.polyval(p_t, lo)
    avg_diff = (int_t - int_a) / (hi - lo)
    return float((np.exp(avg_diff) - 1.0) * 100.0)


def bd_rate_trapezoid(anchor_rate, anchor_quality, test_rate, test_quality, samples: int = 20001) -> float:
    """Independent check of :func:`bd_rate`: least-squares cubic from a
    Vandermonde system and trapezoidal integration on a dense grid."""
    lr_a, q_a = _prepare(anchor_rate, anchor_quality)
    lr_t, q_t = _prepare(test_rate, test_quality)
    lo, hi = _overlap(q_a, q_t)
    grid = np.linspace(lo, hi, samples)

    def fit_eval(q, lr):
        coef, *_ = np.linalg.lstsq(np.vander(q, 4), lr, rcond=None)
        return np.vander(grid, 4) @ coef

    diff = fit_eval(q_t, lr_t) - fit_eval(q_a, lr_a)
    avg = np.sum((diff[1:] + diff[:-1]) * 0.5 * np.diff(grid)) / (hi - lo)
    return float((np.exp(avg) - 1.0) * 100.0)
