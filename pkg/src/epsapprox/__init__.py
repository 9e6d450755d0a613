"""Desk-scale epsilon-approximation toolkit for harmonic functions on
complements of ADR boundary sets."""

__version__ = "0.1.0"
