"""Numerical toolkit for boundary bubbles and their reduced energy."""

__version__ = "0.1.0"
