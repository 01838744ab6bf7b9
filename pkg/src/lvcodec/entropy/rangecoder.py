"""Carry-less range coder with a 64-bit state and 16-bit frequency tables.

Symbols are coded against rows of a :class:`CdfTable`. Each row covers a
contiguous integer range starting at ``offset``; when ``escape`` is set the
last entry of every row is reserved for out-of-range values, which are then
sent as an exp-Golomb style bypass code through the same coder.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

PRECISION = 16
TOTAL = 1 << PRECISION

_MASK = (1 << 64) - 1
_TOP = 1 << 56
_BOT = 1 << 48

_LEN_BITS = 6  # bypass length prefix: 0..63 bits


class DecodeError(ValueError):
    pass


@dataclass
class CdfTable:
    """Rows of cumulative frequencies summing to ``TOTAL``.

    ``cdf[i, :length[i] + 1]`` is the cumulative table of row ``i``;
    entries past the row length are padding.
    """

    cdf: np.ndarray  # (rows, max_len + 1) int64
    length: np.ndarray  # (rows,) int64, symbols per row incl. escape
    offset: np.ndarray  # (rows,) int64, value coded by index 0
    escape: bool = True

    def __post_init__(self):
        self.cdf = np.ascontiguousarray(self.cdf, dtype=np.int64)
        self.length = np.asarray(self.length, dtype=np.int64)
        self.offset = np.asarray(self.offset, dtype=np.int64)

    @property
    def rows(self) -> int:
        return self.cdf.shape[0]

    def validate(self) -> None:
        for i in range(self.rows):
            n = int(self.length[i])
            row = self.cdf[i, : n + 1]
            if row[0] != 0 or row[-1] != TOTAL or np.any(np.diff(row) <= 0):
                raise ValueError(f"cdf row {i} is not a strictly increasing table ending at {TOTAL}")

    def to_bytes(self) -> bytes:
        rows, width = self.cdf.shape
        head = struct.pack("<IIB", rows, width, int(self.escape))
        return (
            head
            + self.cdf.astype("<u4").tobytes()
            + self.length.astype("<u4").tobytes()
            + self.offset.astype("<i4").tobytes()
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CdfTable":
        rows, width, esc = struct.unpack_from("<IIB", buf, 0)
        pos = 9
        cdf = np.frombuffer(buf, "<u4", rows * width, pos).reshape(rows, width)
        pos += 4 * rows * width
        length = np.frombuffer(buf, "<u4", rows, pos)
        pos += 4 * rows
        offset = np.frombuffer(buf, "<i4", rows, pos)
        return cls(cdf.astype(np.int64), length.astype(np.int64), offset.astype(np.int64), bool(esc))

    def bits(self, symbols: np.ndarray, index: np.ndarray) -> float:
        """Ideal code length (bits) of in-support symbols under the quantized table."""
        symbols = np.asarray(symbols, dtype=np.int64).ravel()
        index = np.asarray(index, dtype=np.int64).ravel()
        pos = symbols - self.offset[index]
        freq = self.cdf[index, pos + 1] - self.cdf[index, pos]
        return float(-np.log2(freq / TOTAL).sum())


def pmf_to_cdf(pmf: np.ndarray, length: np.ndarray) -> np.ndarray:
    """Quantize probability rows to integer cumulative tables.

    Every symbol inside a row gets frequency >= 1 (probability >= 2^-16);
    the rounding remainder goes to the most probable symbol.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    rows, width = pmf.shape
    length = np.asarray(length, dtype=np.int64)
    if np.any(length > TOTAL // 2) or np.any(length < 1):
        raise ValueError("row lengths must be in [1, 2^15]")
    valid = np.arange(width)[None, :] < length[:, None]
    p = np.where(valid, np.clip(pmf, 0.0, None), 0.0)
    norm = p.sum(axis=1, keepdims=True)
    p = np.divide(p, norm, out=np.full_like(p, 0.0), where=norm > 0)
    p = np.where((norm > 0) | ~valid, p, 1.0 / length[:, None])
    freq = np.floor(p * (TOTAL - length)[:, None]).astype(np.int64) + 1
    freq = np.where(valid, freq, 0)
    slack = TOTAL - freq.sum(axis=1)
    freq[np.arange(rows), np.argmax(np.where(valid, p, -1.0), axis=1)] += slack
    cdf = np.zeros((rows, width + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    # padding columns repeat TOTAL so searches never land past the row
    return cdf


def _zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v << 1) - 1)


def _unzigzag(z: int) -> int:
    return (z >> 1) if not z & 1 else -((z + 1) >> 1)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()

    def encode(self, cum: int, freq: int, bits: int = PRECISION) -> None:
        r = self.range >> bits
        low = self.low + r * cum
        rng = r * freq
        out = self.out
        while True:
            if (low ^ (low + rng)) >= _TOP:
                if rng >= _BOT:
                    break
                rng = (-low) & (_BOT - 1)
            out.append(low >> 56)
            low = (low << 8) & _MASK
            rng = (rng << 8) & _MASK
        self.low, self.range = low, rng

    def encode_bypass(self, value: int, nbits: int) -> None:
        while nbits > 0:
            chunk = min(nbits, PRECISION)
            nbits -= chunk
            self.encode((value >> nbits) & ((1 << chunk) - 1), 1, chunk)

    def finish(self) -> bytes:
        low, high = self.low, self.low + self.range
        for k in range(64, -1, -1):
            step = 1 << k
            v = -(-low // step) * step
            if v < high:
                break
        # at least one byte so a coded stream is never empty
        nbytes = max(1, (64 - k + 7) // 8)
        tail = v.to_bytes(8, "big")[:nbytes]
        return bytes(self.out) + tail


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 8
        self.low = 0
        self.range = _MASK
        head = data[:8]
        self.code = int.from_bytes(head + b"\x00" * (8 - len(head)), "big")

    def _next_byte(self) -> int:
        p = self.pos
        self.pos += 1
        return self.data[p] if p < len(self.data) else 0

    def peek(self, bits: int = PRECISION) -> int:
        self._r = r = self.range >> bits
        v = (self.code - self.low) // r
        lim = (1 << bits) - 1
        return v if v < lim else lim

    def consume(self, cum: int, freq: int) -> None:
        r = self._r
        low = self.low + r * cum
        rng = r * freq
        code = self.code
        while True:
            if (low ^ (low + rng)) >= _TOP:
                if rng >= _BOT:
                    break
                rng = (-low) & (_BOT - 1)
            code = ((code << 8) | self._next_byte()) & _MASK
            low = (low << 8) & _MASK
            rng = (rng << 8) & _MASK
        self.low, self.range, self.code = low, rng, code

    def decode_bypass(self, nbits: int) -> int:
        value = 0
        while nbits > 0:
            chunk = min(nbits, PRECISION)
            nbits -= chunk
            v = self.peek(chunk)
            self.consume(v, 1)
            value = (value << chunk) | v
        return value

    @property
    def overrun(self) -> int:
        """Bytes consumed past the end of the payload."""
        return max(0, self.pos - max(len(self.data), 8))


def rc_encode(symbols: np.ndarray, table: CdfTable, index: np.ndarray | None = None) -> bytes:
    """Range-code integer ``symbols`` against rows ``index`` of ``table``.

    ``index`` defaults to row 0 for every symbol. Returns the byte payload,
    big-endian and zero-padded in its final byte.
    """
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    index = np.zeros(symbols.size, np.int64) if index is None else np.asarray(index, np.int64).ravel()
    if index.size != symbols.size:
        raise ValueError("index and symbols differ in size")
    enc = RangeEncoder()
    pos = symbols - table.offset[index]
    nsym = table.length[index] - (1 if table.escape else 0)
    inside = (pos >= 0) & (pos < nsym)
    if not table.escape and not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise ValueError(f"symbol {symbols[bad]} at position {bad} outside table support and no escape")
    safe = np.where(inside, pos, nsym)
    cum = table.cdf[index, safe].tolist()
    freq = (table.cdf[index, safe + 1] - table.cdf[index, safe]).tolist()
    inside_l = inside.tolist()
    sym_l = symbols.tolist()
    for i in range(symbols.size):
        enc.encode(cum[i], freq[i])
        if not inside_l[i]:
            z = _zigzag(sym_l[i])
            n = z.bit_length()
            if n >= 1 << _LEN_BITS:
                raise ValueError(f"symbol {sym_l[i]} too large for escape coding")
            enc.encode(n, 1, _LEN_BITS)
            enc.encode_bypass(z, n)
    return enc.finish()


def rc_decode(data: bytes, table: CdfTable, index: np.ndarray | int, count: int | None = None) -> np.ndarray:
    """Inverse of :func:`rc_encode`. ``index`` may be an int row for ``count`` symbols."""
    if isinstance(index, (int, np.integer)):
        if count is None:
            raise ValueError("count required with a scalar index")
        index = np.full(count, int(index), np.int64)
    index = np.asarray(index, np.int64).ravel()
    dec = RangeDecoder(data)
    out = np.empty(index.size, np.int64)
    cdf = table.cdf
    rows = {}
    lengths = table.length.tolist()
    offsets = table.offset.tolist()
    escape = table.escape
    for i, row in enumerate(index.tolist()):
        crow = rows.get(row)
        if crow is None:
            crow = rows[row] = cdf[row, : lengths[row] + 1].tolist()
        target = dec.peek()
        # binary search for the last cum <= target
        lo, hi = 0, lengths[row] - 1
        while lo < hi:
            mid = (lo + hi + 1) >> 1
            if crow[mid] <= target:
                lo = mid
            else:
                hi = mid - 1
        dec.consume(crow[lo], crow[lo + 1] - crow[lo])
        if escape and lo == lengths[row] - 1:
            n = dec.peek(_LEN_BITS)
            dec.consume(n, 1)
            out[i] = _unzigzag(dec.decode_bypass(n))
        else:
            out[i] = offsets[row] + lo
    if dec.overrun > 8:
        raise DecodeError(f"payload exhausted: read {dec.overrun} bytes past end")
    return out
