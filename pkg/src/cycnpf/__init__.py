"""Cyclical neural post-filter for low-cost TTS output."""

__version__ = "0.1.0"
