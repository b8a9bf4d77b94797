"""Numerical lab for Steklov eigenvalues of surfaces with thin cusp handles."""

__version__ = "0.1.0"
