"""Surrogate-guided QAOA discovery in black-box binary landscapes."""

__version__ = "0.1.0"
