"""Spectral simulation and decay analysis for incompressible micropolar
fluids with nonlinear damping."""

__version__ = "0.1.0"
