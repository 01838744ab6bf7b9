"""Spatial ops on NCHW tensors: convolution, transposed convolution,
bilinear warping and factor-2 resampling."""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Tensor, _make

_flop_log: list | None = None


@contextlib.contextmanager
def record_flops():
    """Collect ``(op, flops)`` for every conv/deconv executed in the block."""
    global _flop_log
    prev = _flop_log
    _flop_log = log = []
    try:
        yield log
    finally:
        _flop_log = prev


def conv_flops(cin: int, cout: int, k: int, h_out: int, w_out: int) -> int:
    return 2 * cin * cout * k * k * h_out * w_out


def conv_out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def deconv_offset(k: int, stride: int) -> int:
    return (k - stride + 1) // 2


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernel, got {x.shape} and {weight.shape}")
    cout, cin, kh, kw = weight.shape
    if kh != kw:
        raise ValueError(f"square kernels only, got {kh}x{kw}")
    if x.shape[1] != cin:
        raise ValueError(f"conv2d channel mismatch: input has {x.shape[1]}, kernel expects {cin}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} does not match {cout} output channels")
    k = kh
    b, _, h, w = x.shape
    ho, wo = conv_out_size(h, k, stride, padding), conv_out_size(w, k, stride, padding)
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv2d input {h}x{w} too small for k={k}, padding={padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = _windows(xp, k, stride, ho, wo)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]
    if _flop_log is not None:
        _flop_log.append(("conv2d", conv_flops(cin, cout, k, ho, wo)))

    def bw(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            cols = np.tensordot(g, weight.data, axes=([1], [0]))  # B, ho, wo, cin, k, k
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += (
                        cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw, "conv2d")


def deconv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 2,
    output_size: tuple[int, int] | None = None,
) -> Tensor:
    """Transposed convolution producing ``stride * H`` (or ``output_size``).

    The full scatter output of size ``(H - 1) * stride + k`` is cropped at a
    fixed offset so that a k3/s2/p1 convolution followed by this op restores
    the original spatial dims.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"deconv2d expects 4-D input and kernel, got {x.shape} and {weight.shape}")
    cin, cout, kh, kw = weight.shape
    if kh != kw:
        raise ValueError(f"square kernels only, got {kh}x{kw}")
    if x.shape[1] != cin:
        raise ValueError(f"deconv2d channel mismatch: input has {x.shape[1]}, kernel expects {cin}")
    if kh < stride:
        raise ValueError(f"kernel {kh} smaller than stride {stride}")
    k, s = kh, stride
    b, _, h, w = x.shape
    hf, wf = (h - 1) * s + k, (w - 1) * s + k
    off = deconv_offset(k, s)
    ho, wo = output_size if output_size is not None else (s * h, s * w)
    if ho > hf - off or wo > wf - off or ho <= 0 or wo <= 0:
        raise ValueError(f"deconv2d output {ho}x{wo} not reachable from {h}x{w} (k={k}, stride={s})")
    cols = np.tensordot(x.data, weight.data, axes=([1], [0]))  # B, h, w, cout, k, k
    full = np.zeros((b, cout, hf, wf), dtype=np.result_type(x.data, weight.data))
    for i in range(k):
        for j in range(k):
            full[:, :, i : i + s * (h - 1) + 1 : s, j : j + s * (w - 1) + 1 : s] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(full[:, :, off : off + ho, off : off + wo])
    if bias is not None:
        out += bias.data[None, :, None, None]
    if _flop_log is not None:
        _flop_log.append(("deconv2d", conv_flops(cin, cout, k, h, w)))

    def bw(g):
        gfull = np.zeros_like(full)
        gfull[:, :, off : off + ho, off : off + wo] = g
        gwin = _windows(gfull, k, s, h, w)  # B, cout, h, w, k, k
        gx = np.ascontiguousarray(
            np.tensordot(gwin, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        ) if x.requires_grad else None
        gw = np.tensordot(x.data, gwin, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw, "deconv2d")


def bilinear_warp(source: Tensor, flow: Tensor) -> Tensor:
    """Sample ``source`` at ``(x + dx, y + dy)`` with clamp-to-edge borders.

    ``flow`` channel 0 is the horizontal displacement, channel 1 vertical,
    both in pixels.
    """
    if flow.ndim != 4 or flow.shape[1] != 2:
        raise ValueError(f"flow must have 2 channels (dx, dy), got shape {flow.shape}")
    b, c, h, w = source.shape
    if flow.shape[0] != b or flow.shape[2:] != (h, w):
        raise ValueError(f"flow {flow.shape} does not match source {source.shape}")
    dtype = source.dtype
    gy, gx = np.meshgrid(np.arange(h, dtype=dtype), np.arange(w, dtype=dtype), indexing="ij")
    sx_raw = gx[None] + flow.data[:, 0]
    sy_raw = gy[None] + flow.data[:, 1]
    sx = np.clip(sx_raw, 0, w - 1)
    sy = np.clip(sy_raw, 0, h - 1)
    x0f = np.floor(sx)
    y0f = np.floor(sy)
    wx = (sx - x0f).astype(dtype)
    wy = (sy - y0f).astype(dtype)
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    flat = source.data.reshape(b, c, h * w)
    idx = [(y0 * w + x0), (y0 * w + x1), (y1 * w + x0), (y1 * w + x1)]
    idx = [i.reshape(b, 1, h * w) for i in idx]
    s00, s01, s10, s11 = (np.take_along_axis(flat, np.broadcast_to(i, (b, c, h * w)), axis=2).reshape(b, c, h, w) for i in idx)
    wx_, wy_ = wx[:, None], wy[:, None]
    top = (1 - wx_) * s00 + wx_ * s01
    bot = (1 - wx_) * s10 + wx_ * s11
    out = (1 - wy_) * top + wy_ * bot

    def bw(g):
        gsrc = gflow = None
        if source.requires_grad:
            weights = [(1 - wy_) * (1 - wx_), (1 - wy_) * wx_, wy_ * (1 - wx_), wy_ * wx_]
            base = (np.arange(b * c, dtype=np.int64) * (h * w)).reshape(b, c, 1)
            all_idx = np.concatenate([(base + i).reshape(-1) for i in idx])
            all_val = np.concatenate([(g * wt).reshape(-1) for wt in weights])
            gsrc = np.bincount(all_idx, weights=all_val, minlength=b * c * h * w)
            gsrc = gsrc.reshape(b, c, h, w).astype(dtype)
        if flow.requires_grad:
            dx = ((1 - wy_) * (s01 - s00) + wy_ * (s11 - s10)) * g
            dy = (bot - top) * g
            mx = ((sx_raw > 0) & (sx_raw < w - 1)).astype(dtype)
            my = ((sy_raw > 0) & (sy_raw < h - 1)).astype(dtype)
            gflow = np.stack([dx.sum(axis=1) * mx, dy.sum(axis=1) * my], axis=1)
        return gsrc, gflow

    return _make(out.astype(dtype, copy=False), (source, flow), bw, "bilinear_warp")


def avg_pool2(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2 needs even dims, got {h}x{w}")
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        return (gx.astype(x.dtype, copy=False),)

    return _make(out, (x,), bw, "avg_pool2")


def _up1d(a: np.ndarray, axis: int) -> np.ndarray:
    n = a.shape[axis]
    idx = np.arange(n)
    prev = np.take(a, np.maximum(idx - 1, 0), axis=axis)
    nxt = np.take(a, np.minimum(idx + 1, n - 1), axis=axis)
    even = 0.75 * a + 0.25 * prev
    odd = 0.75 * a + 0.25 * nxt
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(a.shape)
    shape[axis] = 2 * n
    return out.reshape(shape)


def _up1d_adjoint(g: np.ndarray, axis: int) -> np.ndarray:
    n2 = g.shape[axis]
    n = n2 // 2
    shape = list(g.shape)
    shape[axis : axis + 1] = [n, 2]
    g = g.reshape(shape)
    ge = np.take(g, 0, axis=axis + 1)
    go = np.take(g, 1, axis=axis + 1)
    out = 0.75 * (ge + go)
    # ``prev`` contributions from even samples, ``next`` from odd samples
    sl = [slice(None)] * out.ndim

    def at(i):
        s = list(sl)
        s[axis] = i
        return tuple(s)

    if n > 1:
        out[at(slice(0, n - 1))] += 0.25 * ge[at(slice(1, n))]
        out[at(slice(1, n))] += 0.25 * go[at(slice(0, n - 1))]
    out[at(0)] += 0.25 * ge[at(0)]
    out[at(n - 1)] += 0.25 * go[at(n - 1)]
    return out


def upsample2x(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling (half-pixel centres, edge clamped)."""
    out = _up1d(_up1d(x.data, 2), 3).astype(x.dtype, copy=False)

    def bw(g):
        return (_up1d_adjoint(_up1d_adjoint(g, 3), 2).astype(x.dtype, copy=False),)

    return _make(out, (x,), bw, "upsample2x")
