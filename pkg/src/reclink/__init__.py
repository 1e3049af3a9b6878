"""Bayesian bipartite record linkage with record-specific disagreement parameters."""

__version__ = "0.1.0"
