"""Persuasion-augmented two-stage disinformation detection and its evaluation harness."""

__version__ = "0.3.0"
