"""Numerical heat-kernel and criticality toolkit for radial Schroedinger operators."""

__version__ = "0.1.0"
