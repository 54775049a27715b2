"""Corpus engineering toolkit for machine-translation data pipelines."""

__version__ = "0.1.0"
