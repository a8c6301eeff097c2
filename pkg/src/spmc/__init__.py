"""Socially-aware personalized Markov chains (SPMC) and pairwise-ranking baselines."""

__version__ = "0.1.0"
