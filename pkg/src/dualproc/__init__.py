"""Dual-process (model-based / model-free) tabular RL on grid worlds."""

__version__ = "0.1.0"
