"""Localizable entanglement on perturbed topological codes: statics, bounds, dynamics."""

__version__ = "0.1.0"
