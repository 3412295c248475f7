"""Executable algorithmic-probability priors, Bayesian mixtures and agents."""

__version__ = "0.1.0"
