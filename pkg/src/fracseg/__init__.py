"""Numerical laboratory for the square-root-Laplacian competition system."""

__version__ = "0.1.0"
