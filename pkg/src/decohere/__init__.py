"""Projection-method decoherence toolkit."""
__version__ = "0.1.0"
