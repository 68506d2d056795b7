"""Sentence-embedding exporter for the FEMB corpus format."""

__version__ = "0.1.0"
