"""Coded compressed sensing for unsourced random access with AMP and BP denoising."""

__version__ = "0.1.0"
