"""Hierarchical option-critic learning of weekly team pairings."""

__version__ = "0.1.0"
