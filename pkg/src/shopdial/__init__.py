"""Target-oriented shopping dialogue generation and evaluation."""

__version__ = "0.1.0"
