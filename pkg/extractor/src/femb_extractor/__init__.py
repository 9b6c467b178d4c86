"""Batch adapter: frozen speech encoder -> FEMB embedding files."""

__version__ = "0.1.0"
