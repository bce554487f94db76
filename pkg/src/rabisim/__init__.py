"""Rabi-oscillation decoherence in disordered dipolar spin-1/2 ensembles."""

__version__ = "0.1.0"
