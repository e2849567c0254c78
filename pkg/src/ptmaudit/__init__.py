"""Canonicalize neural-network graphs, learn structural classifiers and
audit declared model metadata."""

__version__ = "0.1.0"
