"""Psychographic agent sentiment simulation harness."""

__version__ = "0.1.0"
