"""Raycasting synthetic parking-lot scenes with exact BEV ground truth."""

from .scene import Box, Scene, SceneConfig, PlacementFailure, build_scene, ground_truth_bev
from .render import render_view
from .rig import make_default_rig
from .sequence import FrameRecord, generate_sequence
from .dataset import write_sequence, load_dataset, SequenceData

__all__ = [
    "Box", "Scene", "SceneConfig", "PlacementFailure", "build_scene",
    "ground_truth_bev", "render_view", "make_default_rig",
    "FrameRecord", "generate_sequence",
    "write_sequence", "load_dataset", "SequenceData",
]
