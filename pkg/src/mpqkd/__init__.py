"""Decoy-state mode-pairing QKD key-rate analysis with a flexible pairing strategy."""

__version__ = "0.1.0"
