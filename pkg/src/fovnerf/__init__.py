"""Gaze-contingent neural scene synthesis on concentric spheres."""

__version__ = "0.1.0"
