"""Bounded-depth local tensor algorithms for MAX-K-LIN-2 and triangle-free MAX-CUT."""

__version__ = "0.1.0"
