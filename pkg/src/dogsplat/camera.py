"""Pinhole cameras and ring-of-views constructors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Camera:
    """World-to-camera rigid transform plus pinhole intrinsics.

    Camera axes: x right, y down, z forward. A world point p maps to
    t = rotation @ p + translation; its pixel is
    (fx * tx / tz + cx, fy * ty / tz + cy) in continuous image coordinates
    where pixel (row i, col j) has center (j + 0.5, i + 0.5).
    """

    rotation: np.ndarray    # (3, 3) world -> camera, orthonormal
    translation: np.ndarray  # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.1

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Rotation/translation of a camera at `position` looking at `target`."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    nr = np.linalg.norm(right)
    if nr < 1e-12:  # looking along `up`; pick an arbitrary right axis
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        nr = np.linalg.norm(right)
    right = right / nr
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ position


def ring_cameras(n_views, width, height, radius=2.2, z=0.9, fov_deg=45.0,
                 phase=0.0, target=(0.0, 0.0, 0.0), near=0.1) -> list[Camera]:
    """Cameras evenly spaced on a circle, all looking at `target`."""
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    cams = []
    for k in range(n_views):
        theta = 2.0 * np.pi * k / n_views + phase
        pos = np.array([radius * np.cos(theta), radius * np.sin(theta), z])
        rotation, translation = look_at(pos, target)
        cams.append(Camera(rotation, translation, f, f,
                           width / 2.0, height / 2.0, width, height, near))
    return cams
