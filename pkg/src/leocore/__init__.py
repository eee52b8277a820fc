"""Approximate-core outcomes for budgeted social choice with ordinal preferences."""

__version__ = "0.1.0"
