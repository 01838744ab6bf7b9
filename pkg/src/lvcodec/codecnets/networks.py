"""The seven networks of the P-frame codec."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..entropy import FactorizedPrior, SIGMA_MIN
from ..layers import (
    LEAKY_SLOPE,
    LF_SPEC,
    MC_SPEC,
    MVP_SPEC,
    RP_SPEC,
    Backbone,
    Conv2d,
    Deconv2d,
    ParamStore,
)
from ..tensor import Tensor
from ..tensor.nn_ops import conv_out_size


def _act(x: Tensor) -> Tensor:
    return T.leaky_relu(x, LEAKY_SLOPE)


def feature_width() -> int:
    """Per-reference feature width implied by the MC and RP input counts.

    MC sees 3 + 3 + 4w + 4w channels and RP sees 4w + 4w; both must agree.
    """
    w_mc, rem_mc = divmod(MC_SPEC.n_in - 6, 8)
    w_rp, rem_rp = divmod(RP_SPEC.n_in, 8)
    if rem_mc or rem_rp or w_mc != w_rp:
        raise ValueError(f"inconsistent feature width: MC gives {w_mc}, RP gives {w_rp}")
    return w_mc


FEATURE_WIDTH = feature_width()
N_FRAME_REFS = 4
N_MV_REFS = 3


class MENet:
    """Coarse-to-fine flow estimator with one small refinement CNN per level."""

    def __init__(self, store: ParamStore, name: str = "me", levels: int = 3, width: int = 32):
        self.levels = levels
        self.nets = []
        for lv in range(levels):
            self.nets.append((
                Conv2d(store, f"{name}.l{lv}.conv1", 8, width),
                Conv2d(store, f"{name}.l{lv}.conv2", width, width // 2),
                Conv2d(store, f"{name}.l{lv}.conv3", width // 2, 2, zero=True),
            ))

    def _refine(self, lv: int, x: Tensor) -> Tensor:
        c1, c2, c3 = self.nets[lv]
        return c3(_act(c2(_act(c1(x)))))

    def __call__(self, cur: Tensor, ref: Tensor) -> Tensor:
        if cur.shape != ref.shape:
            raise ValueError(f"frame dims differ: {cur.shape} vs {ref.shape}")
        h, w = cur.shape[2:]
        m = 1 << (self.levels - 1)
        ph, pw = (-h) % m, (-w) % m
        cur_p = T.pad_replicate(cur, 0, ph, 0, pw)
        ref_p = T.pad_replicate(ref, 0, ph, 0, pw)
        pyr = [(cur_p, ref_p)]
        for _ in range(self.levels - 1):
            c, r = pyr[-1]
            pyr.append((T.avg_pool2(c), T.avg_pool2(r)))
        flow = None
        # pyramid level index 0 is full resolution; nets[0] refines the coarsest
        for step, lv in enumerate(range(self.levels - 1, -1, -1)):
            c, r = pyr[lv]
            if flow is None:
                flow = Tensor(np.zeros((c.shape[0], 2) + c.shape[2:], dtype=c.dtype))
            else:
                flow = T.upsample2x(flow) * 2.0
            warped = T.bilinear_warp(r, flow)
            # the amplified temporal difference carries the motion signal; without it
            # training sits on a long plateau
            flow = flow + self._refine(step, T.concat([(c - warped) * 4.0, warped, flow]))
        if ph or pw:
            flow = flow[:, :, :h, :w]
        return flow

    def flops(self, h: int, w: int) -> int:
        m = 1 << (self.levels - 1)
        h, w = h + (-h) % m, w + (-w) % m
        total = 0
        for step, lv in enumerate(range(self.levels - 1, -1, -1)):
            hh, ww = h >> lv, w >> lv
            total += sum(c.flops(hh, ww) for c in self.nets[step])
        return total


class MVPNet:
    """Predicts the current MV from the three buffered MVs plus the last MV
    warped by itself.

    The backbone learns a correction to the newest buffered MV, so an
    untrained predictor extrapolates constant motion.
    """

    def __init__(self, store: ParamStore, name: str = "mvp"):
        self.backbone = Backbone(store, f"{name}.backbone", MVP_SPEC, zero_tail=True)

    def __call__(self, mv_buffer: list[Tensor]) -> Tensor:
        if len(mv_buffer) != N_MV_REFS:
            raise ValueError(f"MV buffer must hold {N_MV_REFS} fields, has {len(mv_buffer)}")
        last = mv_buffer[0]
        return last + self.backbone(T.concat(list(mv_buffer) + [T.bilinear_warp(last, last)]))

    def flops(self, h: int, w: int) -> int:
        return self.backbone.flops(h, w)


def size_chain(h: int, w: int, n: int) -> list[tuple[int, int]]:
    """Spatial sizes after each of ``n`` k3/s2/p1 convolutions."""
    out = [(h, w)]
    for _ in range(n):
        h, w = conv_out_size(h, 3, 2, 1), conv_out_size(w, 3, 2, 1)
        out.append((h, w))
    return out


class LatentCodec:
    """Analysis/synthesis transforms with a mean-scale hyperprior.

    Four stride-2 convs down to ``latent`` channels, four stride-2 transposed
    convs back up; the hyper path adds two more stride-2 stages. ``scale``
    multiplies the input (and divides the output) so that small signals
    such as pixel residuals start with latents larger than the quantization
    step instead of collapsing to zero.
    """

    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, mid: int = 64,
                 latent: int = 96, hyper: int = 64, scale: float = 1.0):
        self.cin, self.cout, self.latent, self.hyper_ch = cin, cout, latent, hyper
        self.scale = scale
        chans = [cin, mid, mid, mid, latent]
        self.enc = [Conv2d(store, f"{name}.enc{i}", chans[i], chans[i + 1], stride=2) for i in range(4)]
        dchans = [latent, mid, mid, mid, cout]
        self.dec = [Deconv2d(store, f"{name}.dec{i}", dchans[i], dchans[i + 1]) for i in range(4)]
        self.henc = [
            Conv2d(store, f"{name}.henc0", latent, hyper, stride=2),
            Conv2d(store, f"{name}.henc1", hyper, hyper, stride=2),
        ]
        self.hdec = [
            Deconv2d(store, f"{name}.hdec0", hyper, hyper),
            Deconv2d(store, f"{name}.hdec1", hyper, 2 * latent, gain=0.1),
        ]
        self.prior = FactorizedPrior(store, f"{name}.prior", hyper)

    def encode(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.cin:
            raise ValueError(f"encoder expects {self.cin} channels, got {x.shape[1]}")
        if self.scale != 1.0:
            x = x * self.scale
        for i, conv in enumerate(self.enc):
            x = conv(x)
            if i < 3:
                x = _act(x)
        return x

    def decode(self, y: Tensor, size: tuple[int, int]) -> Tensor:
        sizes = size_chain(*size, 4)
        for i, deconv in enumerate(self.dec):
            y = deconv(y, output_size=sizes[3 - i])
            if i < 3:
                y = _act(y)
        return y * (1.0 / self.scale) if self.scale != 1.0 else y

    def hyper_encode(self, y: Tensor) -> Tensor:
        return self.henc[1](_act(self.henc[0](y)))

    def hyper_decode(self, z: Tensor, latent_size: tuple[int, int]) -> tuple[Tensor, Tensor]:
        sizes = size_chain(*latent_size, 2)
        h = _act(self.hdec[0](z, output_size=sizes[1]))
        h = self.hdec[1](h, output_size=sizes[0])
        mu = h[:, : self.latent]
        sigma = T.softplus(h[:, self.latent :]) + SIGMA_MIN
        return mu, sigma

    def latent_size(self, h: int, w: int) -> tuple[int, int]:
        return size_chain(h, w, 4)[-1]

    def hyper_size(self, h: int, w: int) -> tuple[int, int]:
        return size_chain(*self.latent_size(h, w), 2)[-1]

    def encode_flops(self, h: int, w: int) -> int:
        sizes = size_chain(h, w, 4)
        return sum(c.flops(*sizes[i]) for i, c in enumerate(self.enc))

    def decode_flops(self, h: int, w: int) -> int:
        sizes = size_chain(h, w, 4)
        return sum(d.flops(*sizes[4 - i]) for i, d in enumerate(self.dec))

    def hyper_encode_flops(self, h: int, w: int) -> int:
        s = size_chain(*self.latent_size(h, w), 2)
        return self.henc[0].flops(*s[0]) + self.henc[1].flops(*s[1])

    def hyper_decode_flops(self, h: int, w: int) -> int:
        s = size_chain(*self.latent_size(h, w), 2)
        return self.hdec[0].flops(*s[2]) + self.hdec[1].flops(*s[1])


class MCNet:
    """Motion compensation: warped frames and per-reference features feed the
    backbone; a conversion conv plus the warped previous frame give the
    prediction."""

    def __init__(self, store: ParamStore, name: str = "mc"):
        self.h_x = Conv2d(store, f"{name}.h_x", 3, FEATURE_WIDTH)
        self.backbone = Backbone(store, f"{name}.backbone", MC_SPEC)
        self.h_f = Conv2d(store, f"{name}.h_f", MC_SPEC.n_out, 3, gain=0.1)

    def __call__(self, mv: Tensor, frames: list[Tensor], mvs: list[Tensor]) -> tuple[Tensor, Tensor]:
        if len(frames) != N_FRAME_REFS or len(mvs) != N_MV_REFS:
            raise ValueError(f"MC needs {N_FRAME_REFS} frames and {N_MV_REFS} MVs, got {len(frames)}/{len(mvs)}")
        feats = [self.h_x(f) for f in frames]
        pairing = [mv] + list(mvs)  # frame T-k is brought forward by the MV that maps it to T-k+1
        warped_feats = [T.bilinear_warp(f, m) for f, m in zip(feats, pairing)]
        warped_prev = T.bilinear_warp(frames[0], mv)
        f_mv = self.backbone(T.concat([frames[0], warped_prev] + feats + warped_feats))
        x_bar = self.h_f(f_mv) + warped_prev
        return x_bar, f_mv

    def flops(self, h: int, w: int) -> int:
        return N_FRAME_REFS * self.h_x.flops(h, w) + self.backbone.flops(h, w) + self.h_f.flops(h, w)


class RPNet:
    """Residual prediction from buffered decoded residuals."""

    def __init__(self, store: ParamStore, name: str = "rp"):
        self.h_r = Conv2d(store, f"{name}.h_r", 3, FEATURE_WIDTH)
        self.backbone = Backbone(store, f"{name}.backbone", RP_SPEC, zero_tail=True)

    def __call__(self, residuals: list[Tensor], mvs: list[Tensor]) -> Tensor:
        if len(residuals) != N_FRAME_REFS or len(mvs) != N_MV_REFS:
            raise ValueError(f"RP needs {N_FRAME_REFS} residuals and {N_MV_REFS} MVs")
        feats = [self.h_r(r) for r in residuals]
        pairing = list(mvs) + [mvs[-1]]  # oldest residual reuses the oldest MV
        warped = [T.bilinear_warp(f, m) for f, m in zip(feats, pairing)]
        return self.backbone(T.concat(feats + warped))

    def flops(self, h: int, w: int) -> int:
        return N_FRAME_REFS * self.h_r.flops(h, w) + self.backbone.flops(h, w)


class LFNet:
    """Loop filter over MC features, residual-decoder features and the
    unfiltered reconstruction, with that reconstruction as global skip."""

    def __init__(self, store: ParamStore, name: str = "lf"):
        self.backbone = Backbone(store, f"{name}.backbone", LF_SPEC, zero_tail=True)

    def __call__(self, x_bar: Tensor, r_hat: Tensor, f_mv: Tensor, f_res: Tensor) -> tuple[Tensor, Tensor]:
        x_prime = x_bar + r_hat
        inp = T.concat([f_mv, f_res, x_prime])
        if inp.shape[1] != LF_SPEC.n_in:
            raise ValueError(f"LF input has {inp.shape[1]} channels, expected {LF_SPEC.n_in}")
        x_hat = T.clip(self.backbone(inp) + x_prime, 0.0, 1.0)
        return x_hat, x_prime

    def flops(self, h: int, w: int) -> int:
        return self.backbone.flops(h, w)
