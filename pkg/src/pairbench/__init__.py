"""Benchmarking toolkit for heralded single-photon pair sources."""

__version__ = "0.1.0"
