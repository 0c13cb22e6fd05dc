"""Cryogenic noise-source metrology toolkit."""

__version__ = "0.1.0"
