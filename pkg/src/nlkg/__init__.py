"""Numerical laboratory for the focusing nonlinear Klein-Gordon equation."""

__version__ = "0.1.0"
