"""Penalized Cox regression with cross-validated tuning."""

__version__ = "0.1.0"
