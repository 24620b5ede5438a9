"""Numerical toolkit for delayed nonlocal-dispersal fronts with a quiescent stage."""

__version__ = "0.1.0"
