"""Exact likelihood and LAN verification for high-frequency fractional Gaussian noise."""
__version__ = "0.1.0"
