"""Frame and sequence encode/decode in an IPPP structure."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..codecnets import CodecModel
from ..entropy import DecodeError
from ..tensor import Tensor
from .container import (
    HEADER_SIZE,
    BitstreamError,
    FrameBitstream,
    FrameType,
    SequenceHeader,
    parse_stream,
)
from .intra import get_intra
from .state import ReferenceState, init_state, serialize_state

log = logging.getLogger(__name__)

ESCAPE_WARN_FRACTION = 0.01


def _as_batch(frame, dtype) -> Tensor:
    arr = np.asarray(frame.data if isinstance(frame, Tensor) else frame, dtype=dtype)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[:2] != (1, 3):
        raise ValueError(f"frame must be (3, H, W), got {arr.shape}")
    return Tensor(arr)


@dataclass
class FrameStats:
    index: int
    frame_type: FrameType
    bits: int
    bpp: float
    escapes: int = 0
    symbols: int = 0

    @property
    def escape_fraction(self) -> float:
        return self.escapes / self.symbols if self.symbols else 0.0


def encode_frame(model: CodecModel, x, state: ReferenceState, predict: bool = True):
    """Code one P-frame. Returns (FrameBitstream, x_hat (3, H, W), new state, result)."""
    xt = _as_batch(x, model.dtype)
    if xt.shape[2:] != state.frames[0].shape[2:]:
        raise ValueError(f"frame dims {xt.shape[2:]} differ from reference {state.frames[0].shape[2:]}")
    with T.no_grad():
        out = model.forward(xt, state, "code", predict=predict)
    fb = FrameBitstream(FrameType.P, out.sections)
    return fb, out.x_hat.data[0], out.buffers, out


def decode_frame(model: CodecModel, fb: FrameBitstream, state: ReferenceState, predict: bool = True,
                 index: int | None = None):
    """Mirror of :func:`encode_frame`. Returns (x_hat (3, H, W), new state)."""
    if fb.frame_type is not FrameType.P or len(fb.sections) != 4:
        raise BitstreamError("expected a 4-section P-frame", frame=index)
    for name, s in zip(("mv_hyper", "mv_delta", "res_hyper", "res_delta"), fb.sections):
        if not s:
            raise BitstreamError("empty section", frame=index, section=name)
    try:
        with T.no_grad():
            out = model.decode(fb.sections, state, predict=predict)
    except DecodeError as exc:
        raise BitstreamError(str(exc), frame=index, section=getattr(exc, "section", None)) from None
    return out.x_hat.data[0], out.buffers


@dataclass
class EncodedSequence:
    data: bytes
    header: SequenceHeader
    reconstructions: list[np.ndarray]
    stats: list[FrameStats]
    states: list[bytes] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return 8 * len(self.data)

    @property
    def bpp(self) -> float:
        h = self.header
        return self.total_bits / (h.width * h.height * h.frame_count)

    def mean_pframe_bits(self) -> float:
        p = [s.bits for s in self.stats if s.frame_type is FrameType.P]
        return float(np.mean(p)) if p else 0.0


@dataclass
class DecodedSequence:
    header: SequenceHeader
    frames: list[np.ndarray]
    states: list[bytes] = field(default_factory=list)
    first_index: int = 0


def _is_intra(index: int, gop: int) -> bool:
    return index == 0 or (gop > 0 and index % gop == 0)


def encode_sequence(frames, model: CodecModel, gop: int = 0, intra: str | int = "stored",
                    predict: bool = True, keep_states: bool = False) -> EncodedSequence:
    """IPPP coding; ``gop=0`` means a single I-frame for the whole sequence."""
    frames = [np.asarray(f, dtype=model.dtype) for f in frames]
    if not frames:
        raise ValueError("cannot encode an empty sequence")
    if gop < 0:
        raise ValueError("gop must be >= 0")
    c, h, w = frames[0].shape
    if c != 3:
        raise ValueError(f"frames must be (3, H, W), got {frames[0].shape}")
    codec = get_intra(intra)
    header = SequenceHeader(w, h, len(frames), gop, model.weights.lambda_index, codec.codec_id,
                            model.weights.checksum())
    parts = [header.to_bytes()]
    recon, stats, states = [], [], []
    state = None
    for i, x in enumerate(frames):
        if x.shape != (3, h, w):
            raise ValueError(f"frame {i} has dims {x.shape}, sequence is {(3, h, w)}")
        if _is_intra(i, gop):
            payload = codec.encode(x)
            fb = FrameBitstream(FrameType.I, [payload])
            x_hat = codec.decode(payload, w, h).astype(model.dtype)
            state = init_state(x_hat)
            s = FrameStats(i, FrameType.I, 8 * fb.nbytes, 8 * fb.nbytes / (w * h))
        else:
            fb, x_hat, state, out = encode_frame(model, x, state, predict)
            s = FrameStats(i, FrameType.P, 8 * fb.nbytes, 8 * fb.nbytes / (w * h), out.escapes, out.symbols)
            if s.escape_fraction > ESCAPE_WARN_FRACTION:
                log.warning("frame %d: %.2f%% of symbols escape-coded", i, 100 * s.escape_fraction)
        parts.append(fb.to_bytes())
        recon.append(x_hat)
        stats.append(s)
        if keep_states:
            states.append(serialize_state(state))
    data = b"".join(parts)
    assert 8 * len(data) == 8 * HEADER_SIZE + sum(s.bits for s in stats)
    return EncodedSequence(data, header, recon, stats, states)


def decode_sequence(data: bytes, model: CodecModel, start: int = 0, predict: bool = True,
                    keep_states: bool = False) -> DecodedSequence:
    """Decode a full stream, or from the I-frame at index ``start`` onward."""
    header, frame_bits = parse_stream(data)
    if header.checksum != model.weights.checksum():
        raise BitstreamError(
            f"weights checksum mismatch: stream {header.checksum.hex()} vs weights "
            f"{model.weights.checksum().hex()} (lambda index {header.lambda_index} vs {model.weights.lambda_index})")
    if not 0 <= start < header.frame_count:
        raise ValueError(f"start frame {start} outside 0..{header.frame_count - 1}")
    if frame_bits[start].frame_type is not FrameType.I:
        raise ValueError(f"frame {start} is not an I-frame")
    try:
        codec = get_intra(header.intra_id)
    except ValueError as exc:
        raise BitstreamError(str(exc)) from None
    w, h = header.width, header.height
    out, states = [], []
    state = None
    for i in range(start, header.frame_count):
        fb = frame_bits[i]
        if fb.frame_type is FrameType.I:
            try:
                x_hat = codec.decode(fb.sections[0], w, h).astype(model.dtype)
            except ValueError as exc:
                raise BitstreamError(str(exc), frame=i, section="intra") from None
            state = init_state(x_hat)
        else:
            x_hat, state = decode_frame(model, fb, state, predict, index=i)
        out.append(x_hat)
        if keep_states:
            states.append(serialize_state(state))
    return DecodedSequence(header, out, states, start)
