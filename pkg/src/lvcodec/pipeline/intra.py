"""Pluggable intra (I-frame) codecs.

Frames are float arrays (3, H, W) in [0, 1]; every intra codec works on
their 8-bit quantization, so the decoded frame is ``round(255 x) / 255``.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(pixels: np.ndarray, dtype=np.float32) -> np.ndarray:
    return (pixels.astype(np.float64) / 255.0).astype(dtype)


class IntraCodec:
    codec_id: int
    name: str

    def encode(self, frame: np.ndarray) -> bytes:
        raise NotImplementedError

    def decode(self, payload: bytes, width: int, height: int) -> np.ndarray:
        raise NotImplementedError


class StoredIntra(IntraCodec):
    """Raw planar 8-bit samples."""

    codec_id = 0
    name = "stored"

    def encode(self, frame):
        return to_uint8(frame).tobytes()

    def decode(self, payload, width, height):
        if len(payload) != 3 * width * height:
            raise ValueError(f"stored intra payload is {len(payload)} bytes, expected {3 * width * height}")
        return from_uint8(np.frombuffer(payload, np.uint8).reshape(3, height, width))


class PngIntra(IntraCodec):
    """Lossless PNG of the 8-bit frame."""

    codec_id = 1
    name = "png"

    def encode(self, frame):
        buf = io.BytesIO()
        Image.fromarray(to_uint8(frame).transpose(1, 2, 0), "RGB").save(buf, format="PNG", optimize=True)
        return buf.getvalue()

    def decode(self, payload, width, height):
        try:
            img = Image.open(io.BytesIO(payload))
            img.load()
        except Exception as exc:
            raise ValueError(f"bad PNG intra payload: {exc}") from None
        if img.size != (width, height) or img.mode != "RGB":
            raise ValueError(f"PNG intra frame is {img.mode} {img.size}, expected RGB {(width, height)}")
        return from_uint8(np.asarray(img).transpose(2, 0, 1))


INTRA_CODECS = {c.codec_id: c for c in (StoredIntra(), PngIntra())}
INTRA_BY_NAME = {c.name: c for c in INTRA_CODECS.values()}


def get_intra(key) -> IntraCodec:
    table = INTRA_BY_NAME if isinstance(key, str) else INTRA_CODECS
    if key not in table:
        raise ValueError(f"unknown intra codec {key!r}")
    return table[key]
