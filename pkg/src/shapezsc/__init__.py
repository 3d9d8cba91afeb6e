"""Diverse reward shapings for zero-shot coordination in a two-agent kitchen."""

__version__ = "0.1.0"
