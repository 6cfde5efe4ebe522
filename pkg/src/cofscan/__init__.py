"""Counterfactual scanning and frequency-table analytics for image classifiers."""

__version__ = "0.1.0"
