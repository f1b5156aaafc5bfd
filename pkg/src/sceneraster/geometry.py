"""Rigid-body poses and the pinhole camera model.

Coordinate conventions used throughout the package:

World frame (right-handed):
  - x / y: ground plane, meters
  - z: up

Camera frame (right-handed, standard computer vision):
  - x: right, y: down, z: forward (optical axis)
  - depth of a point is its camera-frame z

Image frame:
  - origin at the top-left corner, u right, v down, units of pixels
  - pixel (i, j) covers [i, i+1) x [j, j+1) with its center at (i+0.5, j+0.5)

A point is projected by applying the world-to-camera transform, then the
intrinsic matrix K (zero skew), then perspective division.  Points in front
of the camera but outside the image bounds are still returned; clipping
against the image rectangle is a separate stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

_ORTHO_TOL = 1e-9


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """Build a finite 3-vector (float64)."""
    v = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vec3 components must be finite, got {v}")
    return v


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class SE3Pose:
    """A rigid-body transform: x -> rotation @ x + translation.

    The rotation must be orthonormal with determinant +1; this is checked at
    construction (max-norm of R^T R - I below 1e-9) and preserved by
    ``compose`` and ``invert``.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = _as_vec3(self.translation)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        err = np.max(np.abs(r.T @ r - np.eye(3)))
        if err >= _ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I|_inf = {err:.3e})")
        if np.linalg.det(r) <= 0:
            raise ValueError("rotation must have determinant +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "SE3Pose":
        """Pose rotated by ``yaw`` radians about world z."""
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return SE3Pose(r, _as_vec3(translation))

    def apply(self, point) -> np.ndarray:
        """Transform one 3-point."""
        return self.rotation @ _as_vec3(point) + self.translation

    def apply_many(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """The 4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def compose(a: SE3Pose, b: SE3Pose) -> SE3Pose:
    """The transform applying ``b`` first, then ``a``."""
    return SE3Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: SE3Pose) -> SE3Pose:
    """The inverse transform: invert(p) composed with p is the identity."""
    rt = p.rotation.T
    return SE3Pose(rt, -(rt @ p.translation))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with zero skew."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        for v in (self.fx, self.fy, self.cx, self.cy):
            if not np.isfinite(v):
                raise ValueError("intrinsics must be finite")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class CameraRig:
    """A camera: intrinsics, world-to-camera extrinsics, near plane, and canvas size."""

    intrinsics: CameraIntrinsics
    world_to_camera: SE3Pose
    width: int
    height: int
    z_near: float = 0.1
    name: str = "cam"

    def __post_init__(self):
        if self.z_near <= 0:
            raise ValueError("z_near must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("canvas dimensions must be at least 1x1")


class ProjectedPoint(NamedTuple):
    u: float
    v: float
    depth: float


def project(point, rig: CameraRig) -> Optional[ProjectedPoint]:
    """Project a world point through the rig's pinhole camera.

    Returns pixel coordinates (u, v) and the camera-frame depth, or None when
    the point lies in front of the near plane (depth < z_near).  No image
    bounds check is performed; off-screen points are returned as-is.
    """
    p_cam = rig.world_to_camera.apply(point)
    z = p_cam[2]
    if z < rig.z_near:
        return None
    k = rig.intrinsics
    return ProjectedPoint(k.fx * p_cam[0] / z + k.cx, k.fy * p_cam[1] / z + k.cy, z)


def project_points(points: np.ndarray, rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``project`` over an (N, 3) array.

    Returns ``(uvd, visible)`` where ``uvd`` is (N, 3) with columns (u, v,
    depth) and ``visible`` marks rows with depth >= z_near.  Rows behind the
    near plane carry undefined u, v.
    """
    cam = rig.world_to_camera.apply_many(points)
    z = cam[:, 2]
    visible = z >= rig.z_near
    safe_z = np.where(z == 0.0, 1.0, z)
    k = rig.intrinsics
    uvd = np.empty_like(cam)
    uvd[:, 0] = k.fx * cam[:, 0] / safe_z + k.cx
    uvd[:, 1] = k.fy * cam[:, 1] / safe_z + k.cy
    uvd[:, 2] = z
    return uvd, visible
