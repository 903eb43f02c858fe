"""Asymptotic prediction, bounds and simulation for one-bit convex estimators."""

__version__ = "0.1.0"
