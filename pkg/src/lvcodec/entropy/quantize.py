from __future__ import annotations

import numpy as np

from ..tensor import Tensor
from ..tensor.core import _make


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Nearest integer, ties away from zero (commutes with negation)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(x: Tensor, mode: str = "round", rng: np.random.Generator | None = None) -> Tensor:
    """Quantize a latent.

    ``round`` rounds (no gradient), ``noise`` adds U[-0.5, 0.5) and passes
    gradients through unchanged, ``ste`` rounds in the forward pass with an
    identity gradient.
    """
    if mode == "round":
        return Tensor(round_half_away(x.data).astype(x.dtype))
    if mode == "noise":
        if rng is None:
            raise ValueError("noise quantization needs an rng")
        u = rng.uniform(-0.5, 0.5, size=x.shape).astype(x.dtype)
        return x + Tensor(u)
    if mode == "ste":
        return _make(round_half_away(x.data).astype(x.dtype), (x,), lambda g: (g,), "ste_round")
    raise ValueError(f"unknown quantization mode {mode!r}")
