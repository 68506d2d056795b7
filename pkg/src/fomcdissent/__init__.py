"""Hidden-dissent measurement pipeline for FOMC voting records."""

__version__ = "0.1.0"
