"""Bootstrapped representation dynamics on tabular MDPs."""

__version__ = "0.1.0"
