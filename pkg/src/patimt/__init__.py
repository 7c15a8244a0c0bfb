"""Corpus processing and evaluation toolkit for position-aware text-image translation."""

__version__ = "0.1.0"
