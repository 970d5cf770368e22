"""Drag-gradient computation for planar shear-thickening flow around an obstacle."""

__version__ = "0.1.0"
