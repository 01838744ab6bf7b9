"""Metrics, BD-rate, complexity counters, clip I/O and RD plots."""

from .bdrate import BDRateError, bd_rate, bd_rate_trapezoid
from .complexity import count_flops, count_params, count_params_by_network
from .io import (
    CSV_COLUMNS,
    ClipFormatError,
    RDCurve,
    RDPoint,
    VideoClip,
    encode_y4m,
    load_clip,
    load_png_dir,
    load_y4m,
    rd_csv_text,
    read_rd_csv,
    rgb_to_yuv,
    write_clip,
    write_png_dir,
    write_rd_csv,
    write_y4m,
    yuv_to_rgb,
)
from .metrics import MS_SSIM_WEIGHTS, PSNR_CAP, ms_ssim, ms_ssim_scales, psnr
from .plots import plot_rd_curves

__all__ = [
    "CSV_COLUMNS", "MS_SSIM_WEIGHTS", "PSNR_CAP", "BDRateError", "ClipFormatError", "RDCurve",
    "RDPoint", "VideoClip", "bd_rate", "bd_rate_trapezoid", "count_flops", "count_params",
    "count_params_by_network", "encode_y4m", "load_clip", "load_png_dir", "load_y4m",
    "ms_ssim", "ms_ssim_scales", "plot_rd_curves", "psnr", "rd_csv_text", "read_rd_csv",
    "rgb_to_yuv", "write_clip", "write_png_dir", "write_rd_csv", "write_y4m", "yuv_to_rgb",
]
