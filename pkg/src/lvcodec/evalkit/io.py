"""Video ingestion (Y4M, PNG directories) and RD-curve CSV files.

Frames are float32 arrays (3, H, W) holding RGB in [0, 1].
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..codecnets.weights import atomic_write

# BT.601 full-range
_KR, _KB = 0.299, 0.114
_KG = 1.0 - _KR - _KB


class ClipFormatError(ValueError):
    pass


@dataclass
class VideoClip:
    frames: list[np.ndarray]
    width: int
    height: int
    fps: str = "30:1"
    colorspace: str = "rgb"
    name: str = "clip"

    def __post_init__(self):
        for i, f in enumerate(self.frames):
            if f.shape != (3, self.height, self.width):
                raise ClipFormatError(f"frame {i} is {f.shape}, clip is {(3, self.height, self.width)}")

    def __len__(self) -> int:
        return len(self.frames)


# --- colour conversion -----------------------------------------------------------

def yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """8-bit full-range YCbCr planes (same size) to RGB reals in [0, 1]."""
    y = y.astype(np.float64)
    cb = u.astype(np.float64) - 128.0
    cr = v.astype(np.float64) - 128.0
    r = y + 2 * (1 - _KR) * cr
    b = y + 2 * (1 - _KB) * cb
    g = (y - _KR * r - _KB * b) / _KG
    return np.clip(np.stack([r, g, b]) / 255.0, 0.0, 1.0).astype(np.float32)


def rgb_to_yuv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RGB reals to unrounded full-range YCbCr on the 0..255 scale."""
    r, g, b = (np.asarray(rgb, dtype=np.float64) * 255.0)
    y = _KR * r + _KG * g + _KB * b
    cb = (b - y) / (2 * (1 - _KB)) + 128.0
    cr = (r - y) / (2 * (1 - _KR)) + 128.0
    return y, cb, cr


def _to8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


# --- Y4M ---------------------------------------------------------------------------------

_CHROMA = {"420": (2, 2), "420jpeg": (2, 2), "420paldv": (2, 2), "420mpeg2": (2, 2), "444": (1, 1)}


def _parse_y4m_header(line: bytes) -> dict:
    tokens = line.decode("ascii", errors="replace").split()
    if not tokens or tokens[0] != "YUV4MPEG2":
        raise ClipFormatError("not a YUV4MPEG2 stream (byte 0)")
    params = {"C": "420jpeg", "F": "30:1"}
    for tok in tokens[1:]:
        params[tok[0]] = tok[1:]
    try:
        params["W"], params["H"] = int(params["W"]), int(params["H"])
    except (KeyError, ValueError):
        raise ClipFormatError("header lacks valid W/H fields (byte 0)") from None
    if params["W"] <= 0 or params["H"] <= 0:
        raise ClipFormatError(f"invalid dimensions {params['W']}x{params['H']} (byte 0)")
    if params["C"] not in _CHROMA:
        raise ClipFormatError(f"unsupported colourspace C{params['C']} (byte 0); only C420* and C444")
    return params


def load_y4m(path) -> VideoClip:
    data = Path(path).read_bytes()
    end = data.find(b"\n")
    if end < 0:
        raise ClipFormatError("unterminated stream header (byte 0)")
    p = _parse_y4m_header(data[:end])
    w, h = p["W"], p["H"]
    sx, sy = _CHROMA[p["C"]]
    cw, ch = -(-w // sx), -(-h // sy)
    frame_bytes = w * h + 2 * cw * ch
    pos = end + 1
    frames = []
    while pos < len(data):
        i = len(frames)
        nl = data.find(b"\n", pos)
        if nl < 0 or not data[pos:nl].startswith(b"FRAME"):
            raise ClipFormatError(f"frame {i}: missing FRAME marker at byte {pos}")
        pos = nl + 1
        if pos + frame_bytes > len(data):
            raise ClipFormatError(
                f"frame {i}: truncated, needs {frame_bytes} bytes at byte {pos}, {len(data) - pos} available")
        buf = np.frombuffer(data, np.uint8, frame_bytes, pos)
        y = buf[: w * h].reshape(h, w)
        u = buf[w * h : w * h + cw * ch].reshape(ch, cw)
        v = buf[w * h + cw * ch :].reshape(ch, cw)
        if sx > 1 or sy > 1:
            u = np.repeat(np.repeat(u, sy, 0), sx, 1)[:h, :w]
            v = np.repeat(np.repeat(v, sy, 0), sx, 1)[:h, :w]
        frames.append(yuv_to_rgb(y, u, v))
        pos += frame_bytes
    tag = "yuv420" if sx > 1 else "yuv444"
    return VideoClip(frames, w, h, p["F"], tag, Path(path).stem)


def encode_y4m(clip: VideoClip, chroma: str = "420") -> bytes:
    if chroma not in ("420", "444"):
        raise ValueError(f"unsupported chroma {chroma}")
    w, h = clip.width, clip.height
    out = io.BytesIO()
    tag = "420jpeg" if chroma == "420" else "444"
    out.write(f"YUV4MPEG2 W{w} H{h} F{clip.fps} Ip A1:1 C{tag}\n".encode("ascii"))
    for f in clip.frames:
        y, u, v = rgb_to_yuv(f)
        if chroma == "420":
            ph, pw = (-h) % 2, (-w) % 2
            u = np.pad(u, ((0, ph), (0, pw)), mode="edge")
            v = np.pad(v, ((0, ph), (0, pw)), mode="edge")
            u = u.reshape(u.shape[0] // 2, 2, u.shape[1] // 2, 2).mean(axis=(1, 3))
            v = v.reshape(v.shape[0] // 2, 2, v.shape[1] // 2, 2).mean(axis=(1, 3))
        out.write(b"FRAME\n")
        for plane in (y, u, v):
            out.write(_to8(plane).tobytes())
    return out.getvalue()


def write_y4m(clip: VideoClip, path, chroma: str = "420") -> None:
    atomic_write(path, encode_y4m(clip, chroma))


# --- PNG directories -------------------------------------------------------------

def load_png_dir(path) -> VideoClip:
    """All ``*.png`` files in lexicographic order."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise ClipFormatError(f"no PNG frames in {path}")
    frames = []
    for i, f in enumerate(files):
        with Image.open(f) as img:
            arr = np.asarray(img.convert("RGB"))
        if frames and arr.shape[:2] != frames[0].shape[1:]:
            raise ClipFormatError(f"frame {i} ({f.name}) is {arr.shape[1]}x{arr.shape[0]}, "
                                  f"expected {frames[0].shape[2]}x{frames[0].shape[1]}")
        frames.append((arr.transpose(2, 0, 1).astype(np.float64) / 255.0).astype(np.float32))
    return VideoClip(frames, frames[0].shape[2], frames[0].shape[1], colorspace="rgb", name=path.name)


def write_png_dir(clip: VideoClip, path) -> list[Path]:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    written = []
    for i, f in enumerate(clip.frames):
        buf = io.BytesIO()
        pixels = _to8(np.asarray(f, dtype=np.float64) * 255.0).transpose(1, 2, 0)
        Image.fromarray(pixels, "RGB").save(buf, format="PNG")
        target = path / f"frame_{i:05d}.png"
        atomic_write(target, buf.getvalue())
        written.append(target)
    return written


def load_clip(path) -> VideoClip:
    path = Path(path)
    if path.is_dir():
        return load_png_dir(path)
    if path.suffix.lower() == ".y4m":
        return load_y4m(path)
    if path.suffix.lower() == ".png":
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"))
        f = (arr.transpose(2, 0, 1).astype(np.float64) / 255.0).astype(np.float32)
        return VideoClip([f], f.shape[2], f.shape[1], name=path.stem)
    raise ClipFormatError(f"{path}: expected a .y4m file or a directory of PNG frames")


def write_clip(clip: VideoClip, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".y4m":
        write_y4m(clip, path)
    else:
        write_png_dir(clip, path)


# --- RD curves ------------------------------------------------------------------------------

@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr: float
    ms_ssim: float

    def __post_init__(self):
        if self.bpp < 0 or self.ms_ssim > 1.0:
            raise ValueError(f"invalid RD point {self}")


@dataclass
class RDCurve:
    sequence: str
    lambdas: list[float] = field(default_factory=list)
    points: list[RDPoint] = field(default_factory=list)

    def add(self, lam: float, point: RDPoint) -> None:
        self.lambdas.append(lam)
        self.points.append(point)

    def sorted(self) -> "RDCurve":
        order = np.argsort([p.bpp for p in self.points], kind="stable")
        return RDCurve(self.sequence, [self.lambdas[i] for i in order], [self.points[i] for i in order])

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self.sorted()
        return (np.array([p.bpp for p in c.points]), np.array([p.psnr for p in c.points]),
                np.array([p.ms_ssim for p in c.points]))


CSV_COLUMNS = ("sequence", "lambda", "bpp", "psnr", "ms_ssim")


def rd_csv_text(curves: list[RDCurve]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in curves:
        for lam, p in zip(c.lambdas, c.points):
            writer.writerow([c.sequence, f"{lam:g}", f"{p.bpp:.6f}", f"{p.psnr:.4f}", f"{p.ms_ssim:.6f}"])
    return buf.getvalue()


def write_rd_csv(curves: list[RDCurve], path) -> None:
    atomic_write(path, rd_csv_text(curves).encode("utf-8"))


def read_rd_csv(path) -> dict[str, RDCurve]:
    curves: dict[str, RDCurve] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ClipFormatError(f"{os.fspath(path)}: expected columns {','.join(CSV_COLUMNS)}")
        for line, row in enumerate(reader, start=2):
            try:
                point = RDPoint(float(row["bpp"]), float(row["psnr"]), float(row["ms_ssim"]))
                lam = float(row["lambda"])
            except (TypeError, ValueError) as exc:
                raise ClipFormatError(f"{os.fspath(path)} line {line}: {exc}") from None
            curves.setdefault(row["sequence"], RDCurve(row["sequence"])).add(lam, point)
    return curves
