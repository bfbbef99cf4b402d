"""Cosmic-ray burst detection and re-mapping for surface-code magic state factories."""

__version__ = "0.1.0"
