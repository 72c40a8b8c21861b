"""Stereo disparity with bimodal Laplacian mixture heads queried at continuous coordinates."""

__version__ = "0.1.0"
