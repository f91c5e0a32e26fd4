"""Numerical laboratory for the low-Mach nonlinear diffusion wave of a heat-conductive gas."""

__version__ = "0.1.0"
