"""Desk-scale numerical lab for the two-particle Anderson model."""

__version__ = "0.1.0"
