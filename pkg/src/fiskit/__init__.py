"""Numerical toolkit for formally integrable structures and their complexes."""

__version__ = "0.1.0"
