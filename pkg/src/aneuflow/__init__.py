"""Synthetic aneurysm hemodynamics: geometry, CFD, dataset I/O and operator surrogates."""

__version__ = "0.1.0"
