"""Likelihood models: mean-scale Gaussian for latents and a per-channel
learned monotone CDF for hyper-latents, both convertible to coder tables."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .. import tensor as T
from ..layers import ParamStore
from ..tensor import Tensor
from .rangecoder import CdfTable, pmf_to_cdf

SIGMA_MIN = 0.01
LIKELIHOOD_FLOOR = 2.0 ** -16
TAIL_Z = 7.0
MAX_RADIUS = 256


class LatentOrigin(enum.IntEnum):
    MV_DELTA = 0
    RES_DELTA = 1
    MV_HYPER = 2
    RES_HYPER = 3


@dataclass
class LatentCode:
    symbols: np.ndarray  # (C, H, W) integers
    origin: LatentOrigin

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.symbols.ndim != 3:
            raise ValueError(f"latent symbols must be (C, H, W), got {self.symbols.shape}")


@dataclass
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.maximum(np.asarray(self.sigma, dtype=np.float64), SIGMA_MIN)
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma shapes differ")


# --- Gaussian ----------------------------------------------------------------

def _interval_mass(v: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    # evaluated on the lower tail side for precision
    v = np.abs(v)
    return special.ndtr((0.5 - v) / sigma) - special.ndtr((-0.5 - v) / sigma)


def gaussian_likelihood(symbols: np.ndarray, params: GaussianParams,
                        floor: float = LIKELIHOOD_FLOOR) -> np.ndarray:
    """Probability of integer ``symbols`` under N(mu, sigma), floored at 2^-16."""
    p = _interval_mass(np.asarray(symbols, dtype=np.float64) - params.mu, params.sigma)
    return np.maximum(p, floor)


def gaussian_likelihood_t(values: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """Differentiable counterpart of :func:`gaussian_likelihood` for noisy latents."""
    v = T.tabs(values - mu)
    p = T.normal_cdf((0.5 - v) / sigma) - T.normal_cdf((-0.5 - v) / sigma)
    return T.lower_bound(p, LIKELIHOOD_FLOOR)


def estimate_rate(likelihood) -> float | Tensor:
    """Total bits ``sum(-log2 p)`` for an array or tensor of probabilities."""
    if isinstance(likelihood, Tensor):
        return T.tsum(T.log2(likelihood)) * -1.0
    return float(-np.log2(likelihood).sum())


def gaussian_tables(params: GaussianParams) -> tuple[CdfTable, np.ndarray]:
    """One coder row per latent element, centred on round(mu).

    Each row spans ``round(mu) +- ceil(7 sigma) + 1`` (capped) plus an escape
    entry carrying the tail mass.
    """
    mu = params.mu.ravel()
    sigma = params.sigma.ravel()
    n = mu.size
    centre = np.floor(mu + 0.5).astype(np.int64)
    radius = np.minimum(np.ceil(TAIL_Z * sigma).astype(np.int64) + 1, MAX_RADIUS)
    length = 2 * radius + 2
    width = int(length.max()) if n else 2
    k = np.arange(width)[None, :]
    offset = centre - radius
    vals = offset[:, None] + k
    pmf = _interval_mass(vals - mu[:, None], sigma[:, None])
    inside = k < (length - 1)[:, None]
    pmf = np.where(inside, pmf, 0.0)
    tail = np.clip(1.0 - pmf.sum(axis=1), 0.0, None)
    pmf[np.arange(n), length - 1] = tail
    cdf = pmf_to_cdf(pmf, length)
    return CdfTable(cdf, length, offset, escape=True), np.arange(n, dtype=np.int64)


# --- factorized prior -----------------------------------------------------------

class FactorizedPrior:
    """Per-channel non-parametric density (monotone cumulative network).

    The cumulative is a chain of channel-wise affine maps with softplus-positive
    matrices and tanh nonlinear gates, which keeps it monotone in its input.
    """

    FILTERS = (3, 3, 3)
    INIT_SCALE = 10.0

    def __init__(self, store: ParamStore, name: str, channels: int, alphabet_radius: int = 48):
        self.channels = channels
        self.radius = alphabet_radius
        dims = (1,) + self.FILTERS + (1,)
        scale = self.INIT_SCALE ** (1.0 / (len(self.FILTERS) + 1))
        self.matrices, self.biases, self.factors = [], [], []
        for i in range(len(self.FILTERS) + 1):
            init = np.log(np.expm1(1.0 / scale / dims[i + 1]))
            m = store.create(f"{name}.matrix{i}", (channels, dims[i + 1], dims[i]), fill=init)
            b = store.create(f"{name}.bias{i}", (channels, dims[i + 1], 1))
            b.data[...] = store.rng.uniform(-0.5, 0.5, b.shape).astype(store.dtype)
            self.matrices.append(m)
            self.biases.append(b)
            if i < len(self.FILTERS):
                self.factors.append(store.create(f"{name}.factor{i}", (channels, dims[i + 1], 1)))

    def logits_cumulative(self, x: Tensor) -> Tensor:
        """x: (C, 1, N) -> logits of the cumulative at x, same shape."""
        h = x
        for i, (m, b) in enumerate(zip(self.matrices, self.biases)):
            h = T.matmul(T.softplus(m), h) + b
            if i < len(self.factors):
                h = h + T.tanh(self.factors[i]) * T.tanh(h)
        return h

    def likelihood(self, z: Tensor) -> Tensor:
        """Probability mass of the unit interval around each element of z (B, C, H, W)."""
        b, c, h, w = z.shape
        if c != self.channels:
            raise ValueError(f"prior has {self.channels} channels, got {c}")
        flat = z.transpose(1, 0, 2, 3).reshape(c, 1, b * h * w)
        lower = self.logits_cumulative(flat - 0.5)
        upper = self.logits_cumulative(flat + 0.5)
        sign = Tensor(-np.sign(lower.data + upper.data))
        p = T.tabs(T.sigmoid(sign * upper) - T.sigmoid(sign * lower))
        p = T.lower_bound(p, LIKELIHOOD_FLOOR)
        return p.reshape(c, b, h, w).transpose(1, 0, 2, 3)

    def table(self) -> CdfTable:
        """Frozen 16-bit table: one row per channel over [-radius, radius] + escape."""
        r = self.radius
        grid = np.arange(-r, r + 1, dtype=np.float64)
        with T.no_grad():
            x = Tensor(np.broadcast_to(grid, (self.channels, 1, grid.size)).astype(self.matrices[0].dtype))
            lower = self.logits_cumulative(x - 0.5).data.astype(np.float64)[:, 0]
            upper = self.logits_cumulative(x + 0.5).data.astype(np.float64)[:, 0]
        sign = -np.sign(lower + upper)
        pmf = np.abs(special.expit(sign * upper) - special.expit(sign * lower))
        tail = np.clip(1.0 - pmf.sum(axis=1, keepdims=True), 0.0, None)
        pmf = np.concatenate([pmf, tail], axis=1)
        length = np.full(self.channels, grid.size + 1)
        return CdfTable(pmf_to_cdf(pmf, length), length, np.full(self.channels, -r), escape=True)

    def table_index(self, shape: tuple[int, int, int]) -> np.ndarray:
        """Row index (channel) for each element of a (C, H, W) symbol grid."""
        c, h, w = shape
        return np.repeat(np.arange(c, dtype=np.int64), h * w)
