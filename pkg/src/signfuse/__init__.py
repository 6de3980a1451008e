"""Kinematic fusion of body, hand and 2D keypoint estimates into whole-body pose sequences."""

__version__ = "0.1.0"
