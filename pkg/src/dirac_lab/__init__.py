"""Numerical laboratory for the 2D cubic Dirac equation and its harmonic-analysis toolkit."""

__version__ = "0.1.0"
