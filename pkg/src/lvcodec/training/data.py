"""Synthetic training clips and random clip sampling.

Clips are lists of float32 frames (3, H, W) in [0, 1]. Textures are built
periodic (filtered in the Fourier domain) so translation can wrap without
seams.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def smooth_texture(rng: np.random.Generator, size: int, sigma: float = 1.5, contrast: float = 0.2) -> np.ndarray:
    """Periodic coloured noise, low-passed with a Gaussian of ``sigma`` px,
    standardised to mean 0.5 and std ``contrast`` before clipping."""
    noise = rng.standard_normal((3, size, size))
    f = np.fft.fftfreq(size)
    gain = np.exp(-2 * (np.pi * sigma) ** 2 * (f[:, None] ** 2 + f[None, :] ** 2))
    tex = np.real(np.fft.ifft2(np.fft.fft2(noise) * gain))
    # correlate channels a little so the result looks like an image
    mix = np.array([[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7]])
    tex = np.einsum("ij,jhw->ihw", mix, tex)
    tex = tex / tex.std(axis=(1, 2), keepdims=True)
    return np.clip(0.5 + contrast * tex, 0.0, 1.0)


def periodic_pattern(rng: np.random.Generator, size: int, n_waves: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = np.full((3, size, size), 0.5)
    for _ in range(n_waves):
        ky, kx = rng.integers(-4, 5, 2)
        if ky == 0 and kx == 0:
            kx = 2
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.05, 0.15, 3)[:, None, None]
        out += amp * np.sin(2 * np.pi * (ky * yy + kx * xx) + phase)
    return np.clip(out, 0, 1)


def _shift(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Content moved by (+dy, +dx), wrapping; bilinear for fractional shifts."""
    if float(dy).is_integer() and float(dx).is_integer():
        return np.roll(img, (int(dy), int(dx)), axis=(1, 2))
    return ndimage.shift(img, (0, dy, dx), order=1, mode="grid-wrap")


def translating_clip(rng: np.random.Generator, n_frames: int, size: int = 32, velocity=None,
                     canvas: int = 64, kind: str = "texture", subpixel: bool = False) -> list[np.ndarray]:
    """A texture or periodic pattern moving at constant velocity."""
    base = smooth_texture(rng, canvas) if kind == "texture" else periodic_pattern(rng, canvas)
    if velocity is None:
        velocity = rng.integers(-2, 3, 2).astype(float)
        if subpixel:
            velocity = velocity + rng.choice([0.0, 0.5], 2)
    dy, dx = velocity
    oy, ox = rng.integers(0, canvas - size + 1, 2)
    frames = []
    for t in range(n_frames):
        moved = _shift(base, t * dy, t * dx)
        frames.append(moved[:, oy : oy + size, ox : ox + size].astype(np.float32))
    return frames


def overlay_clip(rng: np.random.Generator, n_frames: int, size: int = 32, canvas: int = 64) -> list[np.ndarray]:
    """Moving texture plus a static periodic overlay, so motion compensation
    leaves a residual that repeats from frame to frame."""
    moving = translating_clip(rng, n_frames, size, canvas=canvas)
    overlay = periodic_pattern(rng, size, n_waves=2) - 0.5
    return [np.clip(f + overlay, 0, 1).astype(np.float32) for f in moving]


def synthetic_dataset(rng: np.random.Generator, n_clips: int = 24, n_frames: int = 6, size: int = 32,
                      canvas: int = 64) -> list[list[np.ndarray]]:
    """Mix of translating textures, translating periodic patterns and
    textures under a static periodic overlay."""
    clips = []
    for i in range(n_clips):
        kind = i % 3
        if kind == 0:
            clips.append(translating_clip(rng, n_frames, size, canvas=canvas, kind="texture"))
        elif kind == 1:
            clips.append(translating_clip(rng, n_frames, size, canvas=canvas, kind="pattern"))
        else:
            clips.append(overlay_clip(rng, n_frames, size, canvas))
    return clips


class ClipSampler:
    """Random (clip, start, crop) draws of a fixed length from a dataset."""

    def __init__(self, clips: list[list[np.ndarray]], crop: int | None = None):
        self.clips = clips
        self.crop = crop

    def eligible(self, length: int) -> tuple[list[int], int]:
        """Indices of clips long and large enough, plus the count skipped."""
        ok = []
        for i, c in enumerate(self.clips):
            h, w = c[0].shape[1:]
            if len(c) >= length and (self.crop is None or min(h, w) >= self.crop):
                ok.append(i)
        return ok, len(self.clips) - len(ok)

    def sample(self, rng: np.random.Generator, length: int, batch: int = 1) -> list[np.ndarray]:
        """``length`` arrays of shape (batch, 3, crop, crop)."""
        ok, _ = self.eligible(length)
        if not ok:
            raise ValueError(f"no clip has {length} frames" + (f" of at least {self.crop} px" if self.crop else ""))
        items = []
        for _ in range(batch):
            clip = self.clips[ok[int(rng.integers(len(ok)))]]
            start = int(rng.integers(len(clip) - length + 1))
            h, w = clip[0].shape[1:]
            ch, cw = (self.crop, self.crop) if self.crop else (h, w)
            oy, ox = int(rng.integers(h - ch + 1)), int(rng.integers(w - cw + 1))
            items.append([f[:, oy : oy + ch, ox : ox + cw] for f in clip[start : start + length]])
        return [np.stack([it[t] for it in items]).astype(np.float32) for t in range(length)]
