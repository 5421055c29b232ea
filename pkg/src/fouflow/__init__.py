"""Inertial particles in fractional Gaussian velocity fields on the unit torus."""

__version__ = "0.1.0"
