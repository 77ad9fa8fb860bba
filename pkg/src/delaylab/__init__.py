"""Numerical laboratory for delayed regular linear systems and age-structured populations."""

__version__ = "0.1.0"
