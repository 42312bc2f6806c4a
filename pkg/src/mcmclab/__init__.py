"""Markov chain analysis, drift certificates and MCMC sampling."""

from .errors import McmcLabError
from .markov_core import StochasticMatrix, validate
from .rng import RngStream

__all__ = ["McmcLabError", "RngStream", "StochasticMatrix", "validate"]
__version__ = "0.1.0"
