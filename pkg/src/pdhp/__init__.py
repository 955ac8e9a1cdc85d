"""Probabilistic dual heuristic programming for fully probabilistic control design."""

__version__ = "0.1.0"
