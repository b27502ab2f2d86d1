"""Gradient-ascent unlearning for homogeneous models, with KKT certification."""

__version__ = "0.1.0"
