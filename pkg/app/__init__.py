"""Meshless RBF-FD / hybrid RBF-FD benchmark toolkit."""

__version__ = "1.0.0"
