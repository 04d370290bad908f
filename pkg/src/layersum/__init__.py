"""Layered pseudo-random summation simulator with streaming statistics."""

__version__ = "0.1.0"
