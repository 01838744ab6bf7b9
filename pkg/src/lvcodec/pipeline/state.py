"""Decode-side reference buffers and their canonical serialization."""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from ..codecnets import Buffers
from ..tensor import Tensor

ReferenceState = Buffers


def init_state(frame) -> ReferenceState:
    """Four copies of the decoded I-frame, three zero MVs, four zero residuals."""
    if not isinstance(frame, Tensor):
        frame = Tensor(np.asarray(frame))
    if frame.ndim == 3:
        frame = frame.reshape(1, *frame.shape)
    return Buffers.from_intra(frame)


def serialize_state(state: ReferenceState) -> bytes:
    """Byte image of all buffers, newest first: frames, MVs, residuals."""
    parts = [struct.pack("<BBB", len(state.frames), len(state.mvs), len(state.residuals))]
    for t in state.frames + state.mvs + state.residuals:
        parts.append(struct.pack("<4I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


def state_digest(state: ReferenceState) -> str:
    return hashlib.sha256(serialize_state(state)).hexdigest()
