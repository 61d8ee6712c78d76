"""Symbolic-numeric neural surrogate for 1-D time-dependent PDEs."""

__version__ = "0.1.0"
