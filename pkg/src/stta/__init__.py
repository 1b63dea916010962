"""Semantics-aware test-time adaptation for 3D articulated pose estimation."""

__version__ = "0.1.0"
