"""Sparse Gaussian graphical models for time series with hidden DAR regimes."""

__version__ = "0.1.0"
