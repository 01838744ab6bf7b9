"""``RPLV`` sequence container.

Layout (little-endian)::

    b"RPLV" | version u16 | width u32 | height u32 | frame_count u32 | gop u32
            | lambda_index u8 | intra_id u8 | weights checksum 8 bytes
    per frame: frame_type u8 | section_count u8 | per section: length u32 | payload

I-frames carry one section (the intra payload); P-frames carry four, in the
order mv_hyper, mv_delta, res_hyper, res_delta.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

MAGIC = b"RPLV"
VERSION = 1
_HEADER = struct.Struct("<HIIIIBB8s")
HEADER_SIZE = len(MAGIC) + _HEADER.size
SECTION_NAMES = ("mv_hyper", "mv_delta", "res_hyper", "res_delta")


class BitstreamError(ValueError):
    """Malformed or inconsistent bitstream; ``section`` names the culprit when known."""

    def __init__(self, message: str, frame: int | None = None, section: str | None = None):
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if section is not None:
            where.append(f"section {section}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.frame = frame
        self.section = section


class FrameType(enum.IntEnum):
    I = 0
    P = 1


@dataclass
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    gop: int
    lambda_index: int
    intra_id: int
    checksum: bytes
    version: int = VERSION

    def to_bytes(self) -> bytes:
        return MAGIC + _HEADER.pack(self.version, self.width, self.height, self.frame_count, self.gop,
                                    self.lambda_index, self.intra_id, self.checksum)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "SequenceHeader":
        if len(buf) < HEADER_SIZE:
            raise BitstreamError(f"stream of {len(buf)} bytes is shorter than the {HEADER_SIZE}-byte header")
        if buf[:4] != MAGIC:
            raise BitstreamError("bad magic, not an RPLV stream")
        version, w, h, n, gop, lam, intra, chk = _HEADER.unpack_from(buf, 4)
        if version != VERSION:
            raise BitstreamError(f"unsupported stream version {version}")
        if w == 0 or h == 0:
            raise BitstreamError(f"invalid frame size {w}x{h}")
        return cls(w, h, n, gop, lam, intra, chk, version)


@dataclass
class FrameBitstream:
    frame_type: FrameType
    sections: list[bytes] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        parts = [struct.pack("<BB", int(self.frame_type), len(self.sections))]
        for s in self.sections:
            parts.append(struct.pack("<I", len(s)))
            parts.append(s)
        return b"".join(parts)

    @property
    def nbytes(self) -> int:
        return 2 + sum(4 + len(s) for s in self.sections)


def parse_frame(buf: bytes, pos: int, index: int) -> tuple[FrameBitstream, int]:
    if pos + 2 > len(buf):
        raise BitstreamError("truncated frame header", frame=index)
    ftype, count = buf[pos], buf[pos + 1]
    pos += 2
    try:
        frame_type = FrameType(ftype)
    except ValueError:
        raise BitstreamError(f"unknown frame type {ftype}", frame=index) from None
    expected = 1 if frame_type is FrameType.I else len(SECTION_NAMES)
    if count != expected:
        raise BitstreamError(f"{frame_type.name}-frame has {count} sections, expected {expected}", frame=index)
    sections = []
    for k in range(count):
        name = "intra" if frame_type is FrameType.I else SECTION_NAMES[k]
        if pos + 4 > len(buf):
            raise BitstreamError("truncated section length", frame=index, section=name)
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if n == 0:
            raise BitstreamError("empty section", frame=index, section=name)
        if pos + n > len(buf):
            raise BitstreamError(f"section needs {n} bytes, {len(buf) - pos} left", frame=index, section=name)
        sections.append(bytes(buf[pos : pos + n]))
        pos += n
    return FrameBitstream(frame_type, sections), pos


def parse_stream(buf: bytes) -> tuple[SequenceHeader, list[FrameBitstream]]:
    header = SequenceHeader.from_bytes(buf)
    pos = HEADER_SIZE
    frames = []
    for i in range(header.frame_count):
        fb, pos = parse_frame(buf, pos, i)
        if i == 0 and fb.frame_type is not FrameType.I:
            raise BitstreamError("first frame must be intra", frame=0)
        frames.append(fb)
    if pos != len(buf):
        raise BitstreamError(f"{len(buf) - pos} trailing bytes after the last frame")
    return header, frames
