"""Quantization, likelihood models and the range coder."""

from .models import (
    LIKELIHOOD_FLOOR,
    SIGMA_MIN,
    FactorizedPrior,
    GaussianParams,
    LatentCode,
    LatentOrigin,
    estimate_rate,
    gaussian_likelihood,
    gaussian_likelihood_t,
    gaussian_tables,
)
from .quantize import quantize, round_half_away
from .rangecoder import TOTAL, CdfTable, DecodeError, pmf_to_cdf, rc_decode, rc_encode

__all__ = [
    "LIKELIHOOD_FLOOR", "SIGMA_MIN", "TOTAL", "CdfTable", "DecodeError", "FactorizedPrior",
    "GaussianParams", "LatentCode", "LatentOrigin", "estimate_rate", "gaussian_likelihood",
    "gaussian_likelihood_t", "gaussian_tables", "pmf_to_cdf", "quantize", "rc_decode",
    "rc_encode", "round_half_away",
]
