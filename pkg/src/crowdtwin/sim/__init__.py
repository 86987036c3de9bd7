"""Synthetic stand-ins for the capture devices: scene, scanner, and game agents."""

from .scene import SceneModel, Surface, generate_scene, sample_scene_cloud
from .sensor import SensorModel, Trajectory, passive_scan

__all__ = [
    "SceneModel",
    "Surface",
    "generate_scene",
    "sample_scene_cloud",
    "SensorModel",
    "Trajectory",
    "passive_scan",
]
