"""Synthetic 6DoF pose datasets from composed Gaussian-splat scenes."""

__version__ = "0.1.0"
