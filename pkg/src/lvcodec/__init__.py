"""Learned P-frame video codec with multi-reference motion prediction,
residual prediction and a feature-aided loop filter."""

__version__ = "0.1.0"
