import numpy as np
import pytest

from sceneraster.geometry import CameraIntrinsics, CameraRig, SE3Pose
from sceneraster.scene import Cuboid, Polyline, SceneFrame, SemanticClass, TrafficLight


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_pose(rng: np.random.Generator, span: float = 10.0) -> SE3Pose:
    return SE3Pose(random_rotation(rng), rng.uniform(-span, span, size=3))


def forward_camera_pose(height: float = 1.6) -> SE3Pose:
    """World-to-camera for a camera at (0, 0, height) looking along world +x."""
    r = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    return SE3Pose(r, r @ -np.array([0.0, 0.0, height]))


def make_rig(width=128, height=72, fx=64.0, fy=64.0, pose=None, z_near=0.1,
             name="cam"):
    if pose is None:
        pose = forward_camera_pose()
    return CameraRig(
        intrinsics=CameraIntrinsics(fx, fy, width / 2.0, height / 2.0),
        world_to_camera=pose,
        width=width,
        height=height,
        z_near=z_near,
        name=name,
    )


def random_scene(rng: np.random.Generator, n_boxes=8, n_lines=6, rig=None,
                 with_road=True, with_light=False) -> SceneFrame:
    """A random but plausible driving frame in front of the default camera."""
    if rig is None:
        rig = make_rig()
    map_elements = []
    if with_road:
        half = rng.uniform(4.0, 9.0)
        road = Polyline(
            np.array([
                [1.0, -half, 0.0],
                [rng.uniform(30.0, 60.0), -half, 0.0],
                [rng.uniform(30.0, 60.0), half, 0.0],
                [1.0, half, 0.0],
            ]),
            SemanticClass.ROAD_SURFACE,
            closed=True,
        )
        map_elements.append(road)
    for _ in range(n_lines):
        x0 = rng.uniform(1.0, 40.0)
        y0 = rng.uniform(-8.0, 8.0)
        n = rng.integers(2, 6)
        pts = np.stack([
            np.linspace(x0, x0 + rng.uniform(2.0, 10.0), n),
            np.full(n, y0) + rng.normal(0, 0.2, n),
            np.full(n, 0.02),
        ], axis=1)
        map_elements.append(Polyline(pts, SemanticClass.LANE_LINE))
    actors = []
    classes = [SemanticClass.VEHICLE, SemanticClass.PEDESTRIAN,
               SemanticClass.BICYCLE, SemanticClass.TRAFFIC_CONE]
    for _ in range(n_boxes):
        cls = classes[rng.integers(0, len(classes))]
        pose = SE3Pose.from_yaw(
            rng.uniform(0, 2 * np.pi),
            (rng.uniform(3.0, 40.0), rng.uniform(-8.0, 8.0), 0.0),
        )
        actors.append(Cuboid(
            rng.uniform(0.5, 5.0), rng.uniform(0.4, 2.2), rng.uniform(0.5, 2.0),
            pose, cls,
        ))
    lights = []
    if with_light:
        lights.append(TrafficLight(
            SE3Pose.from_yaw(0.0, (rng.uniform(8.0, 25.0), rng.uniform(-4, 4), 3.0)),
            ("red", "yellow", "green")[rng.integers(0, 3)],
        ))
    return SceneFrame(0.0, tuple(map_elements), tuple(actors), tuple(lights), (rig,))


def random_convex_polygon(rng: np.random.Generator, n=None, scale=10.0,
                          depth_span=(1.0, 50.0)):
    """Random convex polygon with per-vertex depth, vertices in CCW hull order."""
    n = n or rng.integers(3, 9)
    while True:
        pts = rng.uniform(-scale, scale, size=(int(n), 2))
        center = pts.mean(axis=0)
        angles = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
        order = np.argsort(angles)
        pts = pts[order]
        # keep only hull-convex rings: every corner must turn the same way
        v = np.roll(pts, -1, axis=0) - pts
        cross = v[:, 0] * np.roll(v[:, 1], -1) - v[:, 1] * np.roll(v[:, 0], -1)
        if np.all(cross > 1e-9):
            break
    depths = rng.uniform(*depth_span, size=(pts.shape[0], 1))
    return np.hstack([pts, depths])


def mc_clipped_area(poly_uv, rect, n_samples, rng):
    """Monte-Carlo estimate of |polygon ∩ rect| for a convex polygon."""
    u = rng.uniform(rect.u_min, rect.u_max, n_samples)
    v = rng.uniform(rect.v_min, rect.v_max, n_samples)
    inside = np.ones(n_samples, dtype=bool)
    n = len(poly_uv)
    area2 = 0.0
    for i in range(n):
        j = (i + 1) % n
        area2 += poly_uv[i, 0] * poly_uv[j, 1] - poly_uv[j, 0] * poly_uv[i, 1]
    sign = 1.0 if area2 >= 0 else -1.0
    for i in range(n):
        j = (i + 1) % n
        ax, ay = poly_uv[i, 0], poly_uv[i, 1]
        bx, by = poly_uv[j, 0], poly_uv[j, 1]
        inside &= sign * ((bx - ax) * (v - ay) - (by - ay) * (u - ax)) >= 0
    rect_area = (rect.u_max - rect.u_min) * (rect.v_max - rect.v_min)
    return inside.mean() * rect_area
