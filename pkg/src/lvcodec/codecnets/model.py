"""Full P-frame model: ME, MV prediction and coding, motion compensation,
residual prediction and coding, loop filter.

The same object serves training (noisy quantization, differentiable rate)
and bit-exact coding (rounding, range-coded sections). In both modes the
decoder-side path is one function, so the encoder's reconstruction is
whatever the decoder will compute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..entropy import (
    DecodeError,
    GaussianParams,
    estimate_rate,
    gaussian_likelihood_t,
    gaussian_tables,
    quantize,
    rc_decode,
    rc_encode,
    round_half_away,
)
from ..layers import LF_SPEC, MC_SPEC, MVP_SPEC, RP_SPEC, Conv2d
from ..tensor import Tensor
from .networks import (
    FEATURE_WIDTH,
    N_FRAME_REFS,
    N_MV_REFS,
    LatentCodec,
    LFNet,
    MCNet,
    MENet,
    MVPNet,
    RPNet,
)
from .weights import UNTAGGED, ModelWeights, WeightsFormatError

RES_FEATURES = 128
# residuals are small next to the unit quantization step; see LatentCodec
RES_SCALE = 32.0
SYMBOL_LIMIT = 1 << 20
PAPER_TRIPLES = {
    "mvp": (8, 32, 2),
    "rp": (64, 64, 3),
    "mc": (70, 64, 64),
    "lf": (195, 128, 3),
}


def check_channel_constraints() -> None:
    """Assert the four backbone triples and the derived feature width."""
    got = {
        "mvp": (MVP_SPEC.n_in, MVP_SPEC.n_mid, MVP_SPEC.n_out),
        "rp": (RP_SPEC.n_in, RP_SPEC.n_mid, RP_SPEC.n_out),
        "mc": (MC_SPEC.n_in, MC_SPEC.n_mid, MC_SPEC.n_out),
        "lf": (LF_SPEC.n_in, LF_SPEC.n_mid, LF_SPEC.n_out),
    }
    if got != PAPER_TRIPLES:
        raise WeightsFormatError(f"backbone channel triples {got} != {PAPER_TRIPLES}")
    if MVP_SPEC.n_in != 2 * (N_MV_REFS + 1):
        raise WeightsFormatError("MVP input must be 3 buffered MVs plus one self-warped MV")
    if 3 + 3 + 2 * N_FRAME_REFS * FEATURE_WIDTH != MC_SPEC.n_in:
        raise WeightsFormatError("MC input arithmetic broken")
    if 2 * N_FRAME_REFS * FEATURE_WIDTH != RP_SPEC.n_in:
        raise WeightsFormatError("RP input arithmetic broken")
    if MC_SPEC.n_out + RES_FEATURES + 3 != LF_SPEC.n_in:
        raise WeightsFormatError("LF input arithmetic broken")


@dataclass
class CodedLatent:
    """Integer symbols and coded bytes for one latent codec invocation."""

    z: np.ndarray
    delta: np.ndarray
    hyper_bytes: bytes
    delta_bytes: bytes
    escapes: int = 0


@dataclass
class LatentResult:
    decoded: Tensor
    rate: Tensor | float
    coded: CodedLatent | None = None


@dataclass
class Buffers:
    """Newest-first decode-side reference lists (frames 4, MVs 3, residuals 4)."""

    frames: list[Tensor]
    mvs: list[Tensor]
    residuals: list[Tensor]

    @classmethod
    def from_intra(cls, frame: Tensor) -> "Buffers":
        if frame.ndim != 4:
            raise ValueError(f"intra frame must be (B, 3, H, W), got {frame.shape}")
        b, _, h, w = frame.shape
        zeros_mv = Tensor(np.zeros((b, 2, h, w), dtype=frame.dtype))
        zeros_res = Tensor(np.zeros((b, 3, h, w), dtype=frame.dtype))
        return cls([frame] * N_FRAME_REFS, [zeros_mv] * N_MV_REFS, [zeros_res] * N_FRAME_REFS)

    def push(self, frame: Tensor, mv: Tensor, residual: Tensor) -> "Buffers":
        return Buffers(
            [frame] + self.frames[: N_FRAME_REFS - 1],
            [mv] + self.mvs[: N_MV_REFS - 1],
            [residual] + self.residuals[: N_FRAME_REFS - 1],
        )


@dataclass
class FrameResult:
    x_hat: Tensor
    x_prime: Tensor
    x_bar: Tensor
    v: Tensor
    v_bar: Tensor
    v_hat: Tensor
    r_bar: Tensor
    r_hat: Tensor
    rate_mv: Tensor | float
    rate_res: Tensor | float
    buffers: Buffers
    sections: list[bytes] = field(default_factory=list)
    escapes: int = 0
    symbols: int = 0

    @property
    def rate(self):
        return self.rate_mv + self.rate_res


def _escapes(sym: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> int:
    return int(np.count_nonzero((sym < lo) | (sym > hi)))


class CodecModel:
    """All seven networks over a single :class:`ModelWeights` store."""

    def __init__(self, weights: ModelWeights | None = None, seed: int = 0, dtype=np.float32,
                 me_levels: int = 3, lambda_index: int = UNTAGGED):
        check_channel_constraints()
        fresh = ModelWeights(seed=seed, dtype=dtype if weights is None else weights.dtype,
                             lambda_index=lambda_index if weights is None else weights.lambda_index)
        self.weights = fresh
        self.me = MENet(fresh, "me", levels=me_levels)
        self.mvp = MVPNet(fresh, "mvp")
        self.mv_codec = LatentCodec(fresh, "mv", 2, 2)
        self.mc = MCNet(fresh, "mc")
        self.rp = RPNet(fresh, "rp")
        self.res_codec = LatentCodec(fresh, "res", 3, RES_FEATURES, scale=RES_SCALE)
        self.res_tail = Conv2d(fresh, "res.tail", RES_FEATURES, 3, gain=0.1)
        self.lf = LFNet(fresh, "lf")
        if weights is not None:
            fresh.assign(weights.arrays())

    @property
    def dtype(self):
        return self.weights.dtype

    def tensor(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.dtype))

    # --- individual stages ------------------------------------------------

    def me_estimate(self, x: Tensor, ref: Tensor) -> Tensor:
        return self.me(x, ref)

    def mvp_predict(self, mvs: list[Tensor]) -> Tensor:
        return self.mvp(mvs)

    def mc_predict(self, v_hat: Tensor, frames: list[Tensor], mvs: list[Tensor]) -> tuple[Tensor, Tensor]:
        return self.mc(v_hat, frames, mvs)

    def rp_predict(self, residuals: list[Tensor], mvs: list[Tensor]) -> Tensor:
        return self.rp(residuals, mvs)

    def lf_filter(self, x_bar, r_hat, f_mv, f_res) -> tuple[Tensor, Tensor]:
        return self.lf(x_bar, r_hat, f_mv, f_res)

    # --- latent-difference coding ---------------------------------------------

    @staticmethod
    def _train_latent(codec: LatentCodec, x: Tensor, x_bar: Tensor, rng, quant: str) -> LatentResult:
        size = x.shape[2:]
        l = codec.encode(x)
        l_bar = codec.encode(x_bar)
        z_t = quantize(codec.hyper_encode(l), quant, rng)
        mu, sigma = codec.hyper_decode(z_t, l.shape[2:])
        delta_t = quantize(l - l_bar, quant, rng)
        rate = estimate_rate(codec.prior.likelihood(z_t)) + estimate_rate(gaussian_likelihood_t(delta_t, mu, sigma))
        return LatentResult(codec.decode(l_bar + delta_t, size), rate)

    @staticmethod
    def _reconstruct(codec: LatentCodec, z: np.ndarray, delta: np.ndarray, l_bar: Tensor,
                     size: tuple[int, int]) -> tuple[Tensor, GaussianParams]:
        dtype = l_bar.dtype
        mu, sigma = codec.hyper_decode(Tensor(z[None].astype(dtype)), l_bar.shape[2:])
        decoded = codec.decode(l_bar + Tensor(delta[None].astype(dtype)), size)
        return decoded, GaussianParams(mu.data[0], sigma.data[0])

    @classmethod
    def _encode_latent(cls, codec: LatentCodec, x: Tensor, x_bar: Tensor) -> LatentResult:
        if x.shape[0] != 1:
            raise ValueError("bit-exact coding runs one frame at a time")
        size = x.shape[2:]
        l = codec.encode(x)
        l_bar = codec.encode(x_bar)
        z = round_half_away(codec.hyper_encode(l).data[0]).astype(np.int64)
        delta = round_half_away((l - l_bar).data[0]).astype(np.int64)
        prior_table = codec.prior.table()
        hyper_bytes = rc_encode(z.ravel(), prior_table, codec.prior.table_index(z.shape))
        decoded, params = cls._reconstruct(codec, z, delta, l_bar, size)
        g_table, g_index = gaussian_tables(params)
        delta_bytes = rc_encode(delta.ravel(), g_table, g_index)
        lo = g_table.offset
        hi = lo + g_table.length - 2
        esc = _escapes(delta.ravel(), lo, hi) + _escapes(z.ravel(), -codec.prior.radius, codec.prior.radius)
        rate = 8.0 * (len(hyper_bytes) + len(delta_bytes))
        return LatentResult(decoded, rate, CodedLatent(z, delta, hyper_bytes, delta_bytes, esc))

    @staticmethod
    def _fail(msg: str, section: str):
        exc = DecodeError(msg)
        exc.section = section
        return exc

    @classmethod
    def _decode_latent(cls, codec: LatentCodec, hyper_bytes: bytes, delta_bytes: bytes, x_bar: Tensor,
                       size: tuple[int, int], prefix: str = "") -> LatentResult:
        """Decoder side of :meth:`_encode_latent`.

        Corrupt payloads usually decode to garbage symbols rather than
        failing, so implausible magnitudes are rejected too. Errors carry a
        ``section`` attribute naming the offending payload.
        """
        l_bar = codec.encode(x_bar)
        lh, lw = l_bar.shape[2:]
        zh, zw = codec.hyper_size(*size)
        z_shape = (codec.hyper_ch, zh, zw)
        section = f"{prefix}_hyper"
        try:
            z = rc_decode(hyper_bytes, codec.prior.table(), codec.prior.table_index(z_shape)).reshape(z_shape)
        except DecodeError as exc:
            raise cls._fail(str(exc), section) from None
        if np.abs(z).max(initial=0) > SYMBOL_LIMIT:
            raise cls._fail("implausible hyper-latent magnitude", section)
        mu, sigma = codec.hyper_decode(Tensor(z[None].astype(l_bar.dtype)), (lh, lw))
        if not (np.all(np.isfinite(mu.data)) and np.all(np.isfinite(sigma.data))):
            raise cls._fail("non-finite entropy parameters", section)
        params = GaussianParams(mu.data[0], sigma.data[0])
        g_table, g_index = gaussian_tables(params)
        section = f"{prefix}_delta"
        try:
            delta = rc_decode(delta_bytes, g_table, g_index).reshape(params.mu.shape)
        except DecodeError as exc:
            raise cls._fail(str(exc), section) from None
        if np.abs(delta).max(initial=0) > SYMBOL_LIMIT:
            raise cls._fail("implausible latent magnitude", section)
        decoded, _ = cls._reconstruct(codec, z, delta, l_bar, size)
        if not np.all(np.isfinite(decoded.data)):
            raise cls._fail("non-finite reconstruction", section)
        rate = 8.0 * (len(hyper_bytes) + len(delta_bytes))
        return LatentResult(decoded, rate, CodedLatent(z, delta, hyper_bytes, delta_bytes))

    def mv_code(self, v: Tensor, v_bar: Tensor, mode: str = "train", rng=None) -> LatentResult:
        """Code ``v`` as a latent difference against ``v_bar``; mode is
        ``train`` (noise), ``ste`` or ``code`` (rounded and range coded)."""
        if mode == "code":
            return self._encode_latent(self.mv_codec, v, v_bar)
        return self._train_latent(self.mv_codec, v, v_bar, rng, "noise" if mode == "train" else mode)

    def res_code(self, r: Tensor, r_bar: Tensor, mode: str = "train", rng=None) -> tuple[LatentResult, Tensor]:
        """As :meth:`mv_code` for residuals; also returns the pixel residual
        produced by the tail conv on the 128-channel decoder features."""
        if mode == "code":
            res = self._encode_latent(self.res_codec, r, r_bar)
        else:
            res = self._train_latent(self.res_codec, r, r_bar, rng, "noise" if mode == "train" else mode)
        return res, self.res_tail(res.decoded)

    def latent_statistics(self, codec: LatentCodec, x: Tensor, x_bar: Tensor) -> dict[str, float]:
        """Mean |round(l)| against mean |round(l - l_bar)|, no coding."""
        with T.no_grad():
            l = codec.encode(x).data
            l_bar = codec.encode(x_bar).data
        return {
            "mean_abs_latent": float(np.abs(round_half_away(l)).mean()),
            "mean_abs_delta": float(np.abs(round_half_away(l - l_bar)).mean()),
        }

    # --- one P-frame ---------------------------------------------------------------

    def _predictions(self, buf: Buffers, predict: bool) -> tuple[Tensor, Tensor]:
        if predict:
            return self.mvp_predict(buf.mvs), self.rp_predict(buf.residuals, buf.mvs)
        ref = buf.frames[0]
        b, _, h, w = ref.shape
        return (Tensor(np.zeros((b, 2, h, w), dtype=ref.dtype)),
                Tensor(np.zeros((b, 3, h, w), dtype=ref.dtype)))

    def _finish(self, v_hat, buf, r_bar, res, r_hat, x_bar, f_mv):
        x_hat, x_prime = self.lf_filter(x_bar, r_hat, f_mv, res.decoded)
        return x_hat, x_prime, buf.push(x_hat, v_hat, x_hat - x_bar)

    def forward(self, x: Tensor, buf: Buffers, mode: str = "train", rng=None, predict: bool = True) -> FrameResult:
        """Encoder-side pass for one P-frame.

        ``predict=False`` zeroes both prediction paths (v_bar = 0, r_bar = 0).
        """
        v = self.me_estimate(x, buf.frames[0])
        v_bar, r_bar = self._predictions(buf, predict)
        mv = self.mv_code(v, v_bar, mode, rng)
        v_hat = mv.decoded
        x_bar, f_mv = self.mc_predict(v_hat, buf.frames, buf.mvs)
        res, r_hat = self.res_code(x - x_bar, r_bar, mode, rng)
        x_hat, x_prime, new_buf = self._finish(v_hat, buf, r_bar, res, r_hat, x_bar, f_mv)
        out = FrameResult(x_hat, x_prime, x_bar, v, v_bar, v_hat, r_bar, r_hat, mv.rate, res.rate, new_buf)
        if mode == "code":
            out.sections = [mv.coded.hyper_bytes, mv.coded.delta_bytes, res.coded.hyper_bytes, res.coded.delta_bytes]
            out.escapes = mv.coded.escapes + res.coded.escapes
            out.symbols = sum(c.coded.z.size + c.coded.delta.size for c in (mv, res))
        return out

    def decode(self, sections: list[bytes], buf: Buffers, predict: bool = True) -> FrameResult:
        """Decoder-side mirror of :meth:`forward` in ``code`` mode."""
        if len(sections) != 4:
            raise ValueError(f"P-frame needs 4 sections, got {len(sections)}")
        size = buf.frames[0].shape[2:]
        v_bar, r_bar = self._predictions(buf, predict)
        mv = self._decode_latent(self.mv_codec, sections[0], sections[1], v_bar, size, "mv")
        v_hat = mv.decoded
        x_bar, f_mv = self.mc_predict(v_hat, buf.frames, buf.mvs)
        res = self._decode_latent(self.res_codec, sections[2], sections[3], r_bar, size, "res")
        r_hat = self.res_tail(res.decoded)
        x_hat, x_prime, new_buf = self._finish(v_hat, buf, r_bar, res, r_hat, x_bar, f_mv)
        return FrameResult(x_hat, x_prime, x_bar, v_hat, v_bar, v_hat, r_bar, r_hat, mv.rate, res.rate,
                           new_buf, sections=list(sections))

    # --- complexity -------------------------------------------------------------

    def flops(self, h: int, w: int, predict: bool = True) -> int:
        """Conv/deconv FLOPs of one encoder-side P-frame pass at ``h`` x ``w``.

        Hyper encoders are counted in coding mode (encoder only); the decoder
        pass skips ME and the hyper encoders.
        """
        total = self.me.flops(h, w)
        if predict:
            total += self.mvp.flops(h, w) + self.rp.flops(h, w)
        for codec in (self.mv_codec, self.res_codec):
            total += 2 * codec.encode_flops(h, w) + codec.hyper_encode_flops(h, w)
            total += codec.hyper_decode_flops(h, w) + codec.decode_flops(h, w)
        total += self.mc.flops(h, w) + self.res_tail.flops(h, w) + self.lf.flops(h, w)
        return total
