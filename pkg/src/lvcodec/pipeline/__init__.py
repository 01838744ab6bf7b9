"""Sequence orchestration: reference buffers, intra codecs, the RPLV container
and the encode/decode entry points."""

from .codec import (
    DecodedSequence,
    EncodedSequence,
    FrameStats,
    decode_frame,
    decode_sequence,
    encode_frame,
    encode_sequence,
)
from .container import (
    HEADER_SIZE,
    MAGIC,
    SECTION_NAMES,
    VERSION,
    BitstreamError,
    FrameBitstream,
    FrameType,
    SequenceHeader,
    parse_stream,
)
from .intra import INTRA_CODECS, PngIntra, StoredIntra, from_uint8, get_intra, to_uint8
from .state import ReferenceState, init_state, serialize_state, state_digest

__all__ = [
    "HEADER_SIZE", "INTRA_CODECS", "MAGIC", "SECTION_NAMES", "VERSION", "BitstreamError",
    "DecodedSequence", "EncodedSequence", "FrameBitstream", "FrameStats", "FrameType",
    "PngIntra", "ReferenceState", "SequenceHeader", "StoredIntra", "decode_frame",
    "decode_sequence", "encode_frame", "encode_sequence", "from_uint8", "get_intra",
    "init_state", "parse_stream", "serialize_state", "state_digest", "to_uint8",
]
