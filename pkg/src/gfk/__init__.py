"""Numerical laboratory for Colombeau generalized functions on manifolds."""
__version__ = "0.1.0"
