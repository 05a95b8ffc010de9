"""SAGA-family incremental methods for nonconvex finite sums, with IFO accounting."""

__version__ = "0.1.0"
