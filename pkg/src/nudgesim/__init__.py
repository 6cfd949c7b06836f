"""Synthetic mobile-health user activity under nudges, with a bandit testbed."""

__version__ = "0.1.0"
