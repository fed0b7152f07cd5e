"""Bayesian model comparison with the prequential Hyvarinen score."""

__version__ = "0.1.0"
