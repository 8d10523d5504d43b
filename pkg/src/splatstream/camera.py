"""Camera poses, pinhole intrinsics, and the view transforms built from them.

All functions here are pure and operate on immutable values; angles are
radians internally (wire formats use degrees and convert at the boundary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

# Minimum camera-space depth; anything at or behind this plane is not visible.
Z_NEAR = 0.01

# Elevation stays strictly inside (-pi/2, pi/2) so the view matrix never
# degenerates at the poles.
ELEVATION_EPS = 1e-4
ELEVATION_LIMIT = math.pi / 2 - ELEVATION_EPS


@dataclass(frozen=True)
class CameraPose:
    """Yaw/pitch orientation plus world translation.

    azimuth: rotation about the world vertical axis, radians.
    elevation: pitch, radians, clamped to (-pi/2, pi/2) minus a small margin.
    translation: camera position in world units.
    """

    azimuth: float
    elevation: float
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        values = (self.azimuth, self.elevation, *self.translation)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("camera pose components must be finite")
        clamped = min(max(self.elevation, -ELEVATION_LIMIT), ELEVATION_LIMIT)
        object.__setattr__(self, "elevation", clamped)
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))


def pose_from_degrees(azimuth_deg: float, elevation_deg: float,
                      translation: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> CameraPose:
    """Build a pose from wire-format degrees."""
    return CameraPose(math.radians(azimuth_deg), math.radians(elevation_deg), translation)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole parameters in pixels for a width x height image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0 <= self.cx <= self.width) or not (0 <= self.cy <= self.height):
            raise ValueError("principal point must lie within the image")

    def horizontal_fov(self) -> float:
        return 2.0 * math.atan(self.width / (2.0 * self.fx))


@dataclass(frozen=True)
class ViewTransform:
    """Camera-to-world rotation R plus the full 4x4 world-to-camera matrix."""

    rotation: np.ndarray
    world_to_camera: np.ndarray


def rotation_from_angles(azimuth: float, elevation: float) -> np.ndarray:
    """Camera-to-world rotation R_y(azimuth) @ R_x(elevation).

    The camera looks along +z in its own frame, so the world-space forward
    direction is (sin az * cos el, -sin el, cos az * cos el).
    """
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    r_y = np.array([[ca, 0.0, sa],
                    [0.0, 1.0, 0.0],
                    [-sa, 0.0, ca]])
    r_x = np.array([[1.0, 0.0, 0.0],
                    [0.0, ce, -se],
                    [0.0, se, ce]])
    return r_y @ r_x


def world_to_camera(pose: CameraPose) -> ViewTransform:
    """4x4 transform with upper-left R^T and translation column -R^T t."""
    rot = rotation_from_angles(pose.azimuth, pose.elevation)
    t = np.asarray(pose.translation, dtype=np.float64)
    mat = np.eye(4)
    mat[:3, :3] = rot.T
    mat[:3, 3] = -rot.T @ t
    return ViewTransform(rotation=rot, world_to_camera=mat)


class PointProjection(NamedTuple):
    u: float
    v: float
    depth: float
    visible: bool


def project(point, view: ViewTransform, intr: Intrinsics) -> PointProjection:
    """Project one world point to pixel coordinates.

    Points at or behind the near plane come back with visible=False; the
    caller is expected to cull them rather than treat it as an error.
    """
    p = np.asarray(point, dtype=np.float64)
    cam = view.world_to_camera[:3, :3] @ p + view.world_to_camera[:3, 3]
    x, y, z = cam
    if z <= Z_NEAR:
        return PointProjection(0.0, 0.0, float(z), False)
    u = intr.fx * x / z + intr.cx
    v = intr.fy * y / z + intr.cy
    return PointProjection(float(u), float(v), float(z), True)


def project_points(points: np.ndarray, view: ViewTransform, intr: Intrinsics):
    """Vectorized projection; returns (u, v, depth, visible) arrays."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pts @ view.world_to_camera[:3, :3].T + view.world_to_camera[:3, 3]
    z = cam[:, 2]
    visible = z > Z_NEAR
    safe_z = np.where(visible, z, 1.0)
    u = intr.fx * cam[:, 0] / safe_z + intr.cx
    v = intr.fy * cam[:, 1] / safe_z + intr.cy
    return u, v, z, visible


def scale_intrinsics(intr: Intrinsics, new_width: int, new_height: int) -> Intrinsics:
    """Rescale intrinsics to a new resolution, keeping the field of view."""
    if new_width <= 0 or new_height <= 0:
        raise ValueError("new dimensions must be positive")
    sx = new_width / intr.width
    sy = new_height / intr.height
    return Intrinsics(fx=intr.fx * sx, fy=intr.fy * sy,
                      cx=intr.cx * sx, cy=intr.cy * sy,
                      width=int(new_width), height=int(new_height))


class MoveAction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    YAW = "yaw"
    PITCH = "pitch"


def move_relative(pose: CameraPose, action: MoveAction, step: float) -> CameraPose:
    """Apply one motion step relative to the camera's current facing.

    Planar moves follow the azimuth only (elevation does not tilt the travel
    direction); UP/DOWN move along the world vertical, where -y is up under
    this projection convention. YAW/PITCH take the step in radians.
    """
    if action is MoveAction.YAW:
        return replace(pose, azimuth=pose.azimuth + step)
    if action is MoveAction.PITCH:
        return CameraPose(pose.azimuth, pose.elevation + step, pose.translation)

    sa, ca = math.sin(pose.azimuth), math.cos(pose.azimuth)
    tx, ty, tz = pose.translation
    if action is MoveAction.FORWARD:
        delta = (step * sa, 0.0, step * ca)
    elif action is MoveAction.BACKWARD:
        delta = (-(step * sa), 0.0, -(step * ca))
    elif action is MoveAction.RIGHT:
        delta = (step * ca, 0.0, -(step * sa))
    elif action is MoveAction.LEFT:
        delta = (-(step * ca), 0.0, step * sa)
    elif action is MoveAction.UP:
        delta = (0.0, -step, 0.0)
    elif action is MoveAction.DOWN:
        delta = (0.0, step, 0.0)
    else:
        raise ValueError(f"unknown action {action!r}")
    return replace(pose, translation=(tx + delta[0], ty + delta[1], tz + delta[2]))
