"""Named weight sets and the ``RPLW`` tensor container.

Layout (little-endian)::

    b"RPLW" | version u16 | lambda_index u8 | entry_count u32
    per entry: name_len u16 | name utf-8 | rank u8 | dims u32 * rank | float32 data
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..layers import ParamStore

MAGIC = b"RPLW"
VERSION = 1
LAMBDAS = (512, 1024, 2048, 4096, 6144)
UNTAGGED = 255


class WeightsFormatError(ValueError):
    pass


def serialize_tensors(entries: dict[str, np.ndarray], lambda_index: int = UNTAGGED) -> bytes:
    parts = [MAGIC, struct.pack("<HBI", VERSION, lambda_index, len(entries))]
    for name, arr in entries.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def deserialize_tensors(buf: bytes) -> tuple[dict[str, np.ndarray], int]:
    if buf[:4] != MAGIC:
        raise WeightsFormatError("not a weights file (bad magic)")
    try:
        version, lambda_index, count = struct.unpack_from("<HBI", buf, 4)
        if version != VERSION:
            raise WeightsFormatError(f"unsupported weights version {version}")
        pos = 11
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 4 * size > len(buf):
                raise WeightsFormatError(f"truncated data for entry {name!r}")
            entries[name] = np.frombuffer(buf, "<f4", size, pos).reshape(dims).copy()
            pos += 4 * size
    except struct.error as exc:
        raise WeightsFormatError(f"truncated weights file: {exc}") from None
    if pos != len(buf):
        raise WeightsFormatError(f"{len(buf) - pos} trailing bytes after last entry")
    return entries, lambda_index


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ModelWeights(ParamStore):
    """Parameter store with a lambda tag and bit-exact file round trip."""

    def __init__(self, seed: int = 0, dtype=np.float32, lambda_index: int = UNTAGGED):
        super().__init__(seed=seed, dtype=dtype)
        self.lambda_index = lambda_index

    @property
    def lam(self) -> float | None:
        return LAMBDAS[self.lambda_index] if self.lambda_index < len(LAMBDAS) else None

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def to_bytes(self) -> bytes:
        return serialize_tensors(self.arrays(), self.lambda_index)

    def checksum(self) -> bytes:
        """First 8 bytes of SHA-256 over the serialized weights."""
        return hashlib.sha256(self.to_bytes()).digest()[:8]

    def save(self, path) -> None:
        atomic_write(path, self.to_bytes())

    def assign(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy values in; names and shapes must match this store exactly."""
        missing = sorted(set(self.tensors) - set(arrays))
        extra = sorted(set(arrays) - set(self.tensors))
        if missing or extra:
            raise WeightsFormatError(f"weight names differ: missing={missing[:5]} unexpected={extra[:5]}")
        for name, t in self.tensors.items():
            arr = arrays[name]
            if arr.shape != t.shape:
                raise WeightsFormatError(f"{name}: shape {arr.shape} != expected {t.shape}")
            t.data = np.array(arr, dtype=self.dtype)
            t.grad = None
