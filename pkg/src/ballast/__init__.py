"""Balanced allocation on graphs: two-choice processes, moves, grouped probes."""

__version__ = "0.1.0"
