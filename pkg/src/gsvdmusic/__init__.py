"""Noise-robust sound source localization with GSVD-MUSIC."""

__version__ = "0.1.0"
