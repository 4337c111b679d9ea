"""Aerial path planning for detecting and exploring changes in urban scenes."""

from sceneupdate.config import PlannerConfig, load_config, save_config
from sceneupdate.scene import Label, Prism, Scene, diff_scenes, load_bundled, load_scene

__version__ = "0.1.0"

__all__ = [
    "Label",
    "PlannerConfig",
    "Prism",
    "Scene",
    "diff_scenes",
    "load_bundled",
    "load_config",
    "load_scene",
    "save_config",
]
