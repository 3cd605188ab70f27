"""Birefringent emitter-cavity simulation: V-STIRAP photon polarisation dynamics."""

__version__ = "0.1.0"
