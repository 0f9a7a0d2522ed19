"""Radial function-space laboratory."""
