"""Annotated-scene data model: map polylines, actor cuboids, traffic lights,
trajectories, and the semantic color palette.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import SE3Pose, CameraRig, compose, invert


class SemanticClass(enum.Enum):
    ROAD_SURFACE = "road_surface"
    CROSSWALK = "crosswalk"
    LANE_LINE = "lane_line"
    VEHICLE = "vehicle"
    BICYCLE = "bicycle"
    PEDESTRIAN = "pedestrian"
    TRAFFIC_CONE = "traffic_cone"
    BARRIER = "barrier"
    CONSTRUCTION_SIGN = "construction_sign"
    GENERIC_OBJECT = "generic_object"
    TRAFFIC_LIGHT_RED = "traffic_light_red"
    TRAFFIC_LIGHT_YELLOW = "traffic_light_yellow"
    TRAFFIC_LIGHT_GREEN = "traffic_light_green"


# One RGB color per class.  Kept in a single table so alternative palettes can
# be swapped in through RenderConfig.palette.
PALETTE: dict[SemanticClass, tuple[int, int, int]] = {
    SemanticClass.ROAD_SURFACE: (60, 60, 60),
    SemanticClass.CROSSWALK: (255, 255, 255),
    SemanticClass.LANE_LINE: (255, 220, 0),
    SemanticClass.VEHICLE: (0, 90, 255),
    SemanticClass.BICYCLE: (0, 220, 220),
    SemanticClass.PEDESTRIAN: (255, 40, 40),
    SemanticClass.TRAFFIC_CONE: (255, 140, 0),
    SemanticClass.BARRIER: (255, 0, 255),
    SemanticClass.CONSTRUCTION_SIGN: (150, 90, 40),
    SemanticClass.GENERIC_OBJECT: (160, 160, 160),
    SemanticClass.TRAFFIC_LIGHT_RED: (255, 0, 0),
    SemanticClass.TRAFFIC_LIGHT_YELLOW: (255, 255, 0),
    SemanticClass.TRAFFIC_LIGHT_GREEN: (0, 255, 0),
}

# Classes whose closed polylines are filled; everything else is stroked.
FILLED_CLASSES = frozenset({SemanticClass.ROAD_SURFACE, SemanticClass.CROSSWALK})

# Fixed traffic-light housing dimensions (l, w, h), meters.
TRAFFIC_LIGHT_DIMS = (0.4, 0.4, 1.2)

_LIGHT_CLASS = {
    "red": SemanticClass.TRAFFIC_LIGHT_RED,
    "yellow": SemanticClass.TRAFFIC_LIGHT_YELLOW,
    "green": SemanticClass.TRAFFIC_LIGHT_GREEN,
}


@dataclass(frozen=True)
class Polyline:
    """An ordered vertex chain in world coordinates.

    Closed polylines bound filled polygons (road surfaces, crosswalks); open
    ones are stroked as segments.
    """

    vertices: np.ndarray  # (n, 3)
    cls: SemanticClass
    closed: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("polyline vertices must be finite")
        n_min = 3 if self.closed else 2
        if v.shape[0] < n_min:
            raise ValueError(
                f"{'closed' if self.closed else 'open'} polyline needs >= {n_min} vertices"
            )
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class Cuboid:
    """An oriented box with its origin at the bottom-face center.

    The local frame has x along the length, y along the width, z up; the
    bottom face sits at local z = 0 and the top face at z = h.
    """

    length: float
    width: float
    height: float
    pose: SE3Pose
    cls: SemanticClass = SemanticClass.VEHICLE

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise ValueError("cuboid dimensions must be positive")


@dataclass(frozen=True)
class TrafficLight:
    pose: SE3Pose
    state: str  # "red" | "yellow" | "green"

    def __post_init__(self):
        if self.state not in _LIGHT_CLASS:
            raise ValueError(f"unknown traffic light state {self.state!r}")


@dataclass(frozen=True)
class Trajectory:
    """Timestamped poses of one agent, timestamps strictly increasing."""

    samples: tuple[tuple[float, SE3Pose], ...]
    agent_id: str = "ego"

    def __post_init__(self):
        samples = tuple((float(t), p) for t, p in self.samples)
        if len(samples) < 1:
            raise ValueError("trajectory needs at least one sample")
        times = [t for t, _ in samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"timestamps must be strictly increasing in track {self.agent_id!r}")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.translation for _, p in self.samples])

    def span(self) -> tuple[float, float]:
        return self.samples[0][0], self.samples[-1][0]


@dataclass(frozen=True)
class SceneFrame:
    """One annotated instant: map, actor cuboids, lights, and camera rigs."""

    timestamp: float
    map_elements: tuple[Polyline, ...] = ()
    actors: tuple[Cuboid, ...] = ()
    lights: tuple[TrafficLight, ...] = ()
    rigs: tuple[CameraRig, ...] = ()


# Local corner template. Bottom face counter-clockwise viewed from above
# (+x,+y -> -x,+y -> -x,-y -> +x,-y), then the top face in matching order.
_CORNER_SIGNS = np.array(
    [[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.float64
)

# Corner indices of the six faces, wound so the normal points outward.
# Indices 0-3 are the bottom ring, 4-7 the top ring (same x, y order).
FACE_INDICES = (
    (0, 3, 2, 1),  # bottom, -z
    (4, 5, 6, 7),  # top, +z
    (0, 4, 7, 3),  # +x
    (1, 2, 6, 5),  # -x
    (0, 1, 5, 4),  # +y
    (3, 7, 6, 2),  # -y
)

# Corner-index pairs of the 12 wireframe edges.
EDGE_INDICES = tuple(
    [(i, (i + 1) % 4) for i in range(4)]
    + [(4 + i, 4 + (i + 1) % 4) for i in range(4)]
    + [(i, i + 4) for i in range(4)]
)


def local_corners(length: float, width: float, height: float) -> np.ndarray:
    """The 8 corners (+-l/2, +-w/2, z) for z in {0, h} in the box frame."""
    xy = _CORNER_SIGNS * np.array([length / 2.0, width / 2.0])
    bottom = np.hstack([xy, np.zeros((4, 1))])
    top = np.hstack([xy, np.full((4, 1), height)])
    return np.vstack([bottom, top])


def corners(box: Cuboid) -> np.ndarray:
    """The 8 world-frame corner points of a cuboid, as an (8, 3) array.

    Order: bottom face counter-clockwise viewed from above, then the top face
    in matching order.
    """
    return box.pose.apply_many(local_corners(box.length, box.width, box.height))


def batch_corners(boxes: Sequence[Cuboid]) -> np.ndarray:
    """``corners`` over many cuboids at once, shape (len(boxes), 8, 3)."""
    if not boxes:
        return np.empty((0, 8, 3))
    rot = np.stack([b.pose.rotation for b in boxes])
    trans = np.stack([b.pose.translation for b in boxes])
    dims = np.array([[b.length, b.width, b.height] for b in boxes])
    local = np.empty((len(boxes), 8, 3))
    local[:, :4, :2] = _CORNER_SIGNS[None, :, :] * (dims[:, None, :2] / 2.0)
    local[:, 4:, :2] = local[:, :4, :2]
    local[:, :4, 2] = 0.0
    local[:, 4:, 2] = dims[:, 2:3]
    return np.einsum("aij,akj->aki", rot, local) + trans[:, None, :]


def cuboid_faces(box: Cuboid) -> np.ndarray:
    """The 6 quads covering the box surface, shape (6, 4, 3), outward winding."""
    return corners(box)[np.array(FACE_INDICES)]


def cuboid_edges(box: Cuboid) -> np.ndarray:
    """The 12 wireframe edges as a (12, 2, 3) array of segment endpoints."""
    return corners(box)[np.array(EDGE_INDICES)]


def light_as_cuboid(light: TrafficLight) -> Cuboid:
    """An upright fixed-size cuboid color-coded by the light's state."""
    l, w, h = TRAFFIC_LIGHT_DIMS
    return Cuboid(l, w, h, light.pose, _LIGHT_CLASS[light.state])


def _rot_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues: rotation matrix for an axis-angle vector."""
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3)
    k = w / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def _rot_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-12:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # Near a half-turn the off-diagonal formula degenerates; recover the
        # axis from the dominant diagonal of (R + I) / 2.
        m = (r + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(m)))
        axis = m[:, i] / np.sqrt(m[i, i])
        axis /= np.linalg.norm(axis)
        return axis * theta
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return axis * (theta / (2.0 * np.sin(theta)))


def slerp(r0: np.ndarray, r1: np.ndarray, alpha: float) -> np.ndarray:
    """Geodesic interpolation between two rotation matrices."""
    return r0 @ _rot_exp(alpha * _rot_log(r0.T @ r1))


def interpolate(traj: Trajectory, t: float) -> SE3Pose:
    """Pose at time ``t``: linear in translation, geodesic in rotation.

    ``t`` must lie within the trajectory's time span; exact at sample times.
    """
    t0, t1 = traj.span()
    if not (t0 <= t <= t1):
        raise ValueError(f"t={t} outside trajectory span [{t0}, {t1}]")
    times = traj.times
    i = int(np.searchsorted(times, t, side="right")) - 1
    ta, pa = traj.samples[i]
    if t == ta:
        return pa
    tb, pb = traj.samples[i + 1]
    alpha = (t - ta) / (tb - ta)
    trans = (1.0 - alpha) * pa.translation + alpha * pb.translation
    rot = slerp(pa.rotation, pb.rotation, alpha)
    return SE3Pose(rot, trans)


def carrier_rig(mount: CameraRig, carrier_pose: SE3Pose) -> CameraRig:
    """Resolve a mounted camera to a world-frame rig.

    ``mount.world_to_camera`` is read as the carrier-to-camera transform; the
    returned rig's extrinsics map world points into that camera.
    """
    cam_from_world = compose(mount.world_to_camera, invert(carrier_pose))
    return CameraRig(
        intrinsics=mount.intrinsics,
        world_to_camera=cam_from_world,
        width=mount.width,
        height=mount.height,
        z_near=mount.z_near,
        name=mount.name,
    )
