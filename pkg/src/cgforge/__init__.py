"""Averaged causal graphs from discrete data via hill-climbing on BIC."""

__version__ = "0.1.0"
