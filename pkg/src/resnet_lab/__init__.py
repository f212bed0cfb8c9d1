"""Finite and continuous-depth ResNets trained by regularized gradient flows."""

__version__ = "0.1.0"
