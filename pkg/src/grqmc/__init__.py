"""Grover-Rudolph state preparation feeding quantum Monte-Carlo, with a classical baseline."""

__version__ = "0.1.0"
