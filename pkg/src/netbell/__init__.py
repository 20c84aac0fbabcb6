"""Nonlinear Bell inequalities for acyclic networks built by leaf addition."""

__version__ = "0.1.0"
