"""Numerical convex integration for C^{1,alpha} isometric extensions."""

__version__ = "0.1.0"
