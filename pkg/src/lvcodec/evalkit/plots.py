"""RD-curve figures written straight to files (SVG by default)."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..codecnets.weights import atomic_write  # noqa: E402

_YLABEL = {"psnr": "PSNR (dB)", "ms_ssim": "MS-SSIM"}


def plot_rd_curves(curves, path, metric: str = "psnr", title: str | None = None) -> Path:
    """One line+marker series per curve, bpp on x. ``curves`` is a list of
    RDCurve or a mapping label -> RDCurve."""
    if metric not in _YLABEL:
        raise ValueError(f"metric must be one of {sorted(_YLABEL)}")
    items = curves.items() if isinstance(curves, dict) else [(c.sequence, c) for c in curves]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for label, curve in items:
        bpp, psnr, msssim = curve.arrays()
        ax.plot(bpp, psnr if metric == "psnr" else msssim, marker="o", ms=4, lw=1.2, label=label)
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel(_YLABEL[metric])
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    path = Path(path)
    buf = io.BytesIO()
    fig.savefig(buf, format=path.suffix.lstrip(".") or "svg")
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return path
