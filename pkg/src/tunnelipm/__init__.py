"""Inverse perspective mapping and distance-sectioned detection evaluation for tunnel CCTV."""

__version__ = "0.1.0"
