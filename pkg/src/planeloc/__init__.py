"""Stereo camera localization constrained by planes from a prior LiDAR map."""

__version__ = "0.1.0"
