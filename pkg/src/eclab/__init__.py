"""Deterministic simulation lab for eventually consistent broadcast and consensus."""

__version__ = "0.1.0"
