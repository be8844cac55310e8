"""Surround-view fisheye camera images to bird's-eye-view maps.

The package couples a unified-projection fisheye camera model with a
deformable-attention BEV encoder, task heads for discretized height and
semantic segmentation, and a raycasting synthetic-scene generator used as
a verifiable oracle for the whole pipeline.
"""

__version__ = "0.1.0"
