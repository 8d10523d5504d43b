"""Remote-rendering adaptive streaming engine for Gaussian splat scenes."""

__version__ = "0.1.0"

from .abr import BitrateLadder, LatencyAbr, QualityProfile, ThroughputEstimator, default_ladder
from .camera import CameraPose, Intrinsics, MoveAction, move_relative, pose_from_degrees
from .model import (ActivatedPrimitives, GaussianPrimitiveSet, ModelRegistry,
                    activate, parse_ply, scan_model_directory)
from .render import Framebuffer, RenderStats, encode_jpeg, encode_png, render_framebuffer, render_view

__all__ = [
    "ActivatedPrimitives",
    "BitrateLadder",
    "CameraPose",
    "Framebuffer",
    "GaussianPrimitiveSet",
    "Intrinsics",
    "LatencyAbr",
    "ModelRegistry",
    "MoveAction",
    "QualityProfile",
    "RenderStats",
    "ThroughputEstimator",
    "activate",
    "default_ladder",
    "encode_jpeg",
    "encode_png",
    "move_relative",
    "parse_ply",
    "pose_from_degrees",
    "render_framebuffer",
    "render_view",
    "scan_model_directory",
]
