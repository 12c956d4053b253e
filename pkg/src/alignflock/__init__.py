"""Alignment dynamics: particle flocking, spectral gaps and pressureless alignment hydrodynamics."""

__version__ = "0.1.0"
