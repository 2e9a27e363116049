"""Hitting probabilities of Gaussian processes with general variance functions."""

__version__ = "0.1.0"
