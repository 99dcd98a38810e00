"""Patch-based texture synthesis with entropic optimal transport matching."""

__version__ = "0.1.0"
