"""Differentially private training and privacy accounting for ad prediction models."""

__version__ = "0.1.0"
