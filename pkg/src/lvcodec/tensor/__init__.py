"""Minimal NCHW tensor engine with reverse-mode autodiff."""

from .core import (
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    div,
    exp,
    is_grad_enabled,
    leaky_relu,
    log,
    log2,
    lower_bound,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    normal_cdf,
    pad_replicate,
    power,
    relu,
    reshape,
    sigmoid,
    softplus,
    sub,
    tabs,
    tanh,
    transpose,
    tsum,
)
from .nn_ops import (
    avg_pool2,
    bilinear_warp,
    conv2d,
    conv_flops,
    conv_out_size,
    deconv2d,
    record_flops,
    upsample2x,
)

__all__ = [
    "Tensor", "add", "as_tensor", "avg_pool2", "backward", "bilinear_warp", "clip", "concat",
    "conv2d", "conv_flops", "conv_out_size", "deconv2d", "div", "exp", "is_grad_enabled",
    "leaky_relu", "log", "log2", "lower_bound", "matmul", "mean", "mul", "neg", "no_grad",
    "normal_cdf", "pad_replicate", "power", "record_flops", "relu", "reshape", "sigmoid",
    "softplus", "sub", "tabs", "tanh", "transpose", "tsum", "upsample2x",
]
