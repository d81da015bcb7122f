"""Numerical linearization and density certificates for nonautonomous systems."""

__version__ = "0.1.0"
