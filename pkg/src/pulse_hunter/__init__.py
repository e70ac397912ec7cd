"""Travelling-pulse speeds for a neural field with synaptic depression."""
__version__ = "0.1.0"
