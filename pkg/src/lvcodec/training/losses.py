"""Rate-distortion objective with MSE or differentiable MS-SSIM distortion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..codecnets.weights import LAMBDAS
from ..evalkit.metrics import K1, K2, MS_SSIM_WEIGHTS, WINDOW, WINDOW_SIGMA, gaussian_window, ms_ssim_scales
from ..tensor import Tensor


@dataclass(frozen=True)
class RDLossConfig:
    lam: float = 2048.0
    distortion: str = "mse"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if self.distortion not in ("mse", "ms_ssim"):
            raise ValueError(f"distortion must be mse or ms_ssim, got {self.distortion!r}")

    @classmethod
    def from_index(cls, index: int, distortion: str = "mse") -> "RDLossConfig":
        return cls(float(LAMBDAS[index]), distortion)


def _blur(x: Tensor, win: np.ndarray) -> Tensor:
    b, c, h, w = x.shape
    k = Tensor(win.reshape(1, 1, *win.shape).astype(x.dtype))
    y = T.conv2d(x.reshape(b * c, 1, h, w), k)
    return y.reshape(b, c, *y.shape[2:])


def ms_ssim_t(a: Tensor, b: Tensor) -> Tensor:
    """Differentiable MS-SSIM of (B, C, H, W) batches, averaged over B and C.

    Same scales, weights and window rule as :func:`lvcodec.evalkit.ms_ssim`.
    Contrast terms are floored at a small positive value so the fractional
    powers keep finite gradients.
    """
    n = ms_ssim_scales(*a.shape[2:])
    weights = np.array(MS_SSIM_WEIGHTS[:n])
    weights /= weights.sum()
    c1, c2 = K1**2, K2**2
    total = None
    for s in range(n):
        size = min(WINDOW, *a.shape[2:])
        win = gaussian_window(size, WINDOW_SIGMA * size / WINDOW)
        mx, my = _blur(a, win), _blur(b, win)
        sxx = _blur(a * a, win) - mx * mx
        syy = _blur(b * b, win) - my * my
        sxy = _blur(a * b, win) - mx * my
        cs = (sxy * 2.0 + c2) / (sxx + syy + c2)
        if s == n - 1:
            term = T.mean(cs * ((mx * my * 2.0 + c1) / (mx * mx + my * my + c1)), axis=(2, 3))
        else:
            term = T.mean(cs, axis=(2, 3))
            a, b = T.avg_pool2(_even(a)), T.avg_pool2(_even(b))
        term = T.power(T.lower_bound(term, 1e-6), float(weights[s]))
        total = term if total is None else total * term
    return T.mean(total)


def _even(x: Tensor) -> Tensor:
    h, w = x.shape[2] // 2 * 2, x.shape[3] // 2 * 2
    return x if (h, w) == x.shape[2:] else x[:, :, :h, :w]


def distortion(originals: list[Tensor], recons: list[Tensor], kind: str = "mse") -> Tensor:
    """Mean over frames of MSE (or 1 - MS-SSIM) on the [0, 1] scale."""
    if len(originals) != len(recons) or not originals:
        raise ValueError("need equal, non-empty lists of originals and reconstructions")
    terms = []
    for x, y in zip(originals, recons):
        if x.shape != y.shape:
            raise ValueError(f"clip shapes differ: {x.shape} vs {y.shape}")
        terms.append(T.mean((x - y) ** 2) if kind == "mse" else 1.0 - ms_ssim_t(x, y))
    d = terms[0]
    for t in terms[1:]:
        d = d + t
    return d * (1.0 / len(terms))


def rd_loss(originals: list[Tensor], recons: list[Tensor], rate_bits, cfg: RDLossConfig) -> tuple[Tensor, Tensor, Tensor]:
    """``lam * D + R / pixels`` with pixels counted over every coded frame.

    Returns (loss, distortion, bpp).
    """
    d = distortion(originals, recons, cfg.distortion)
    b, _, h, w = originals[0].shape
    pixels = b * h * w * len(originals)
    bpp = T.as_tensor(rate_bits) * (1.0 / pixels)
    return d * cfg.lam + bpp, d, bpp
