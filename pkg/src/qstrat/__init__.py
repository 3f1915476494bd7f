"""Quantitative-MRI feature extraction and cross-validated classification."""

__version__ = "0.1.0"
