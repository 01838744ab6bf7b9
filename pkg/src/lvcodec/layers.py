"""Building blocks and the shared down-sampled ResNet backbone.

Every layer registers its parameters by dotted name in a :class:`ParamStore`
and knows its own FLOP count for a given input size, so complexity can be
computed without running a forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .tensor.nn_ops import conv_flops, conv_out_size

LEAKY_SLOPE = 0.01


class ParamStore:
    """Ordered name -> Tensor map plus the RNG used to initialise new entries."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.tensors: dict[str, Tensor] = {}
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)

    def create(self, name: str, shape: tuple[int, ...], std: float = 0.0, fill: float = 0.0) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        if std > 0:
            data = self.rng.standard_normal(shape) * std
        else:
            data = np.full(shape, fill)
        t = Tensor(data.astype(self.dtype), requires_grad=True)
        self.tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors.values())


class Conv2d:
    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, k: int = 3, stride: int = 1,
                 zero: bool = False, gain: float = 1.0):
        self.cin, self.cout, self.k, self.stride = cin, cout, k, stride
        self.padding = (k - 1) // 2
        std = 0.0 if zero else gain * np.sqrt(2.0 / (cin * k * k))
        self.weight = store.create(f"{name}.weight", (cout, cin, k, k), std=std)
        self.bias = store.create(f"{name}.bias", (cout,))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        return (conv_out_size(h, self.k, self.stride, self.padding),
                conv_out_size(w, self.k, self.stride, self.padding))

    def flops(self, h: int, w: int) -> int:
        return conv_flops(self.cin, self.cout, self.k, *self.out_size(h, w))


class Deconv2d:
    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, k: int = 4, stride: int = 2,
                 zero: bool = False, gain: float = 1.0):
        self.cin, self.cout, self.k, self.stride = cin, cout, k, stride
        std = 0.0 if zero else gain * np.sqrt(2.0 * stride * stride / (cin * k * k))
        self.weight = store.create(f"{name}.weight", (cin, cout, k, k), std=std)
        self.bias = store.create(f"{name}.bias", (cout,))

    def __call__(self, x: Tensor, output_size: tuple[int, int] | None = None) -> Tensor:
        return T.deconv2d(x, self.weight, self.bias, stride=self.stride, output_size=output_size)

    def flops(self, h: int, w: int) -> int:
        # cost is per input pixel for a scatter-style transposed conv
        return conv_flops(self.cin, self.cout, self.k, h, w)


class ResBlock:
    """x + conv(act(conv(x)))."""

    def __init__(self, store: ParamStore, name: str, ch: int):
        self.ch = ch
        self.conv1 = Conv2d(store, f"{name}.conv1", ch, ch)
        self.conv2 = Conv2d(store, f"{name}.conv2", ch, ch, gain=0.1)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.ch:
            raise ValueError(f"resblock expects {self.ch} channels, got {x.shape[1]}")
        return x + self.conv2(T.leaky_relu(self.conv1(x), LEAKY_SLOPE))

    def flops(self, h: int, w: int) -> int:
        return self.conv1.flops(h, w) + self.conv2.flops(h, w)


class AttentionBlock:
    """Simplified attention: ``x + trunk(x) * sigmoid(mask(x))``."""

    def __init__(self, store: ParamStore, name: str, ch: int):
        self.trunk = ResBlock(store, f"{name}.trunk", ch)
        self.mask_res = ResBlock(store, f"{name}.mask", ch)
        self.mask_conv = Conv2d(store, f"{name}.mask_conv", ch, ch, k=1)

    def __call__(self, x: Tensor) -> Tensor:
        gate = T.sigmoid(self.mask_conv(self.mask_res(x)))
        return x + self.trunk(x) * gate

    def flops(self, h: int, w: int) -> int:
        return self.trunk.flops(h, w) + self.mask_res.flops(h, w) + self.mask_conv.flops(h, w)


@dataclass(frozen=True)
class BackboneSpec:
    n_in: int
    n_mid: int
    n_out: int
    n_resblocks: int = 3
    downsample: bool = True

    def __post_init__(self):
        if min(self.n_in, self.n_mid, self.n_out) < 1:
            raise ValueError(f"channel counts must be >= 1: {self}")


MVP_SPEC = BackboneSpec(8, 32, 2)
RP_SPEC = BackboneSpec(64, 64, 3)
MC_SPEC = BackboneSpec(70, 64, 64)
LF_SPEC = BackboneSpec(195, 128, 3)


class Backbone:
    """Head conv -> residual trunk + attention -> tail back to full resolution.

    With ``downsample`` the head has stride 2 and the tail is a stride-2
    transposed conv, so the trunk runs on a quarter of the pixels.
    """

    def __init__(self, store: ParamStore, name: str, spec: BackboneSpec, zero_tail: bool = False):
        self.spec = spec
        stride = 2 if spec.downsample else 1
        self.head = Conv2d(store, f"{name}.head", spec.n_in, spec.n_mid, stride=stride)
        self.blocks = [ResBlock(store, f"{name}.res{i}", spec.n_mid) for i in range(spec.n_resblocks)]
        self.attention = AttentionBlock(store, f"{name}.attn", spec.n_mid)
        if spec.downsample:
            self.tail = Deconv2d(store, f"{name}.tail", spec.n_mid, spec.n_out, zero=zero_tail)
        else:
            self.tail = Conv2d(store, f"{name}.tail", spec.n_mid, spec.n_out, zero=zero_tail)

    def trunk(self, h: Tensor) -> Tensor:
        for block in self.blocks:
            h = block(h)
        return self.attention(h)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.n_in:
            raise ValueError(f"backbone expects {self.spec.n_in} input channels, got shape {x.shape}")
        h, w = x.shape[2:]
        pad_h, pad_w = (h % 2, w % 2) if self.spec.downsample else (0, 0)
        if pad_h or pad_w:
            x = T.pad_replicate(x, 0, pad_h, 0, pad_w)
        f = self.trunk(T.leaky_relu(self.head(x), LEAKY_SLOPE))
        if self.spec.downsample:
            out = self.tail(f, output_size=(h + pad_h, w + pad_w))
        else:
            out = self.tail(f)
        if pad_h or pad_w:
            out = out[:, :, :h, :w]
        return out

    def trunk_flops(self, h: int, w: int) -> int:
        """FLOPs of the residual trunk when fed an ``h`` x ``w`` map."""
        return sum(b.flops(h, w) for b in self.blocks) + self.attention.flops(h, w)

    def flops(self, h: int, w: int) -> int:
        if self.spec.downsample:
            h, w = h + h % 2, w + w % 2
        hh, ww = self.head.out_size(h, w)
        return self.head.flops(h, w) + self.trunk_flops(hh, ww) + self.tail.flops(hh, ww)
