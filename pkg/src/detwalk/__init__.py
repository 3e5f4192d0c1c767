"""Numerical verification and emulation of a deterministic quantum walk
algorithm for the promised triangle sum problem."""

__version__ = "0.1.0"
