"""Routine-change detection from kitchen sensor event streams."""

__version__ = "0.1.0"
