import numpy as np
import pytest

from sceneraster.geometry import SE3Pose, compose
from sceneraster.scene import (
    Cuboid,
    Polyline,
    SemanticClass,
    TrafficLight,
    Trajectory,
    TRAFFIC_LIGHT_DIMS,
    PALETTE,
    batch_corners,
    corners,
    cuboid_edges,
    cuboid_faces,
    interpolate,
    light_as_cuboid,
    local_corners,
    slerp,
)

from conftest import random_pose


def as_set(pts, digits=9):
    return {tuple(np.round(p, digits)) for p in pts}


class TestCorners:
    def test_axis_aligned_symmetric_box(self):
        c = corners(Cuboid(2.0, 2.0, 1.0, SE3Pose.identity()))
        want = {(sx, sy, z) for sx in (-1.0, 1.0) for sy in (-1.0, 1.0)
                for z in (0.0, 1.0)}
        assert as_set(c) == want

    def test_yaw_90_rotates_xy(self):
        box0 = Cuboid(4.0, 2.0, 1.5, SE3Pose.identity())
        box90 = Cuboid(4.0, 2.0, 1.5, SE3Pose.from_yaw(np.pi / 2))
        rotated = np.array([[-y, x, z] for x, y, z in corners(box0)])
        np.testing.assert_allclose(corners(box90), rotated, atol=1e-9)

    def test_bottom_face_centroid_is_pose_translation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pose = random_pose(rng)
            box = Cuboid(3.0, 1.5, 2.0, pose)
            centroid = corners(box)[:4].mean(axis=0)
            np.testing.assert_allclose(centroid, pose.translation, atol=1e-9)

    def test_commutes_with_pose_composition(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p, q = random_pose(rng), random_pose(rng)
            box_p = Cuboid(2.0, 1.0, 1.0, p)
            box_qp = Cuboid(2.0, 1.0, 1.0, compose(q, p))
            np.testing.assert_allclose(
                corners(box_qp), q.apply_many(corners(box_p)), atol=1e-9
            )

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        boxes = [
            Cuboid(rng.uniform(0.5, 5), rng.uniform(0.5, 3), rng.uniform(0.5, 3),
                   random_pose(rng))
            for _ in range(17)
        ]
        batched = batch_corners(boxes)
        for i, box in enumerate(boxes):
            np.testing.assert_allclose(batched[i], corners(box), atol=1e-12)

    def test_local_corner_order_is_ccw_bottom_then_top(self):
        loc = local_corners(2.0, 2.0, 1.0)
        np.testing.assert_array_equal(
            loc[:4, :2], [[1, 1], [-1, 1], [-1, -1], [1, -1]]
        )
        np.testing.assert_array_equal(loc[:4, 2], 0.0)
        np.testing.assert_array_equal(loc[4:, 2], 1.0)
        np.testing.assert_array_equal(loc[4:, :2], loc[:4, :2])


class TestFaces:
    def test_face_areas_match_analytic(self):
        box = Cuboid(3.0, 2.0, 1.5, SE3Pose.identity())
        areas = []
        for quad in cuboid_faces(box):
            a = np.linalg.norm(np.cross(quad[1] - quad[0], quad[3] - quad[0]))
            areas.append(a)
        assert sorted(np.round(areas, 9)) == sorted(
            [3 * 2, 3 * 2, 3 * 1.5, 3 * 1.5, 2 * 1.5, 2 * 1.5]
        )

    def test_face_vertices_cover_corner_set(self):
        box = Cuboid(2.0, 1.0, 0.5, random_pose(np.random.default_rng(3)))
        face_pts = cuboid_faces(box).reshape(-1, 3)
        assert as_set(face_pts) == as_set(corners(box))

    def test_each_corner_belongs_to_three_faces(self):
        box = Cuboid(1.0, 1.0, 1.0, SE3Pose.identity())
        face_pts = cuboid_faces(box).reshape(-1, 3)
        for c in corners(box):
            hits = np.sum(np.all(np.abs(face_pts - c) < 1e-12, axis=1))
            assert hits == 3

    def test_distinct_normals_pairwise_orthogonal_for_identity_pose(self):
        box = Cuboid(2.0, 1.0, 0.5, SE3Pose.identity())
        normals = []
        for quad in cuboid_faces(box):
            n = np.cross(quad[1] - quad[0], quad[2] - quad[0])
            normals.append(n / np.linalg.norm(n))
        distinct = {tuple(np.round(np.abs(n), 9)) for n in normals}
        distinct = [np.array(d) for d in distinct]
        assert len(distinct) == 3
        for i in range(3):
            for j in range(i + 1, 3):
                assert abs(distinct[i] @ distinct[j]) < 1e-9

    def test_normals_point_outward(self):
        box = Cuboid(2.0, 1.0, 3.0, random_pose(np.random.default_rng(4)))
        center = corners(box).mean(axis=0)
        for quad in cuboid_faces(box):
            n = np.cross(quad[1] - quad[0], quad[2] - quad[0])
            assert n @ (quad.mean(axis=0) - center) > 0

    def test_twelve_edges_each_corner_in_three(self):
        box = Cuboid(1.0, 2.0, 3.0, SE3Pose.identity())
        edges = cuboid_edges(box)
        assert edges.shape == (12, 2, 3)
        pts = edges.reshape(-1, 3)
        for c in corners(box):
            assert np.sum(np.all(np.abs(pts - c) < 1e-12, axis=1)) == 3


class TestInterpolate:
    def make_traj(self):
        return Trajectory(
            samples=(
                (0.0, SE3Pose.from_yaw(0.0, (0.0, 0.0, 0.0))),
                (1.0, SE3Pose.from_yaw(np.pi / 2, (2.0, 0.0, 0.0))),
                (2.0, SE3Pose.from_yaw(np.pi / 2, (2.0, 2.0, 0.0))),
            ),
            agent_id="a",
        )

    def test_exact_at_sample_times(self):
        traj = self.make_traj()
        for t, pose in traj.samples:
            got = interpolate(traj, t)
            np.testing.assert_array_equal(got.rotation, pose.rotation)
            np.testing.assert_array_equal(got.translation, pose.translation)

    def test_midpoint_of_pure_translations(self):
        traj = Trajectory(
            samples=(
                (0.0, SE3Pose(np.eye(3), (1.0, 2.0, 3.0))),
                (1.0, SE3Pose(np.eye(3), (3.0, 6.0, -1.0))),
            ),
        )
        mid = interpolate(traj, 0.5)
        np.testing.assert_allclose(mid.translation, [2.0, 4.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(mid.rotation, np.eye(3), atol=1e-12)

    def test_midpoint_of_yaw_0_and_90_is_yaw_45(self):
        # axis-angle halving oracle: half of a 90 degree z-rotation
        traj = self.make_traj()
        mid = interpolate(traj, 0.5)
        np.testing.assert_allclose(
            mid.rotation, SE3Pose.from_yaw(np.pi / 4).rotation, atol=1e-9
        )

    def test_slerp_matches_scipy(self):
        scipy_rot = pytest.importorskip("scipy.spatial.transform").Rotation
        rng = np.random.default_rng(5)
        for _ in range(20):
            r0 = random_pose(rng).rotation
            r1 = random_pose(rng).rotation
            alpha = rng.uniform(0, 1)
            times = [0.0, 1.0]
            key = scipy_rot.from_matrix(np.stack([r0, r1]))
            from scipy.spatial.transform import Slerp

            oracle = Slerp(times, key)([alpha]).as_matrix()[0]
            np.testing.assert_allclose(slerp(r0, r1, alpha), oracle, atol=1e-9)

    def test_continuity(self):
        traj = self.make_traj()
        delta = 1e-6
        for t in (0.3, 0.9999995, 1.5):
            a = interpolate(traj, t)
            b = interpolate(traj, t + delta)
            assert np.linalg.norm(a.translation - b.translation) < 1e-4
            assert np.max(np.abs(a.rotation - b.rotation)) < 1e-4

    def test_out_of_range_raises(self):
        traj = self.make_traj()
        with pytest.raises(ValueError, match="outside"):
            interpolate(traj, -0.1)
        with pytest.raises(ValueError, match="outside"):
            interpolate(traj, 2.1)


class TestTrafficLight:
    def test_red_light_cuboid(self):
        pose = SE3Pose.from_yaw(0.3, (1.0, 2.0, 3.0))
        cub = light_as_cuboid(TrafficLight(pose, "red"))
        assert (cub.length, cub.width, cub.height) == TRAFFIC_LIGHT_DIMS
        assert cub.pose is pose
        assert cub.cls is SemanticClass.TRAFFIC_LIGHT_RED

    def test_green_light_class(self):
        cub = light_as_cuboid(TrafficLight(SE3Pose.identity(), "green"))
        assert cub.cls is SemanticClass.TRAFFIC_LIGHT_GREEN

    def test_same_pose_different_state_differs_only_in_class(self):
        pose = SE3Pose.identity()
        a = light_as_cuboid(TrafficLight(pose, "red"))
        b = light_as_cuboid(TrafficLight(pose, "yellow"))
        assert (a.length, a.width, a.height) == (b.length, b.width, b.height)
        assert a.pose is b.pose
        assert a.cls is not b.cls

    def test_unknown_state_rejected(self):
        with pytest.raises(ValueError):
            TrafficLight(SE3Pose.identity(), "blue")


class TestValidation:
    def test_every_class_has_a_palette_color(self):
        for cls in SemanticClass:
            r, g, b = PALETTE[cls]
            assert all(0 <= c <= 255 for c in (r, g, b))
        assert len(set(PALETTE.values())) == len(PALETTE)

    def test_polyline_needs_two_vertices(self):
        with pytest.raises(ValueError):
            Polyline(np.array([[0.0, 0.0, 0.0]]), SemanticClass.LANE_LINE)

    def test_closed_polyline_needs_three_vertices(self):
        with pytest.raises(ValueError):
            Polyline(np.zeros((2, 3)), SemanticClass.ROAD_SURFACE, closed=True)

    def test_nonfinite_vertices_rejected(self):
        with pytest.raises(ValueError):
            Polyline(np.array([[0.0, 0.0, 0.0], [np.nan, 1.0, 0.0]]),
                     SemanticClass.LANE_LINE)

    def test_nonpositive_dims_rejected(self):
        with pytest.raises(ValueError):
            Cuboid(0.0, 1.0, 1.0, SE3Pose.identity())

    def test_trajectory_timestamps_strictly_increasing(self):
        p = SE3Pose.identity()
        with pytest.raises(ValueError, match="increasing"):
            Trajectory(samples=((0.0, p), (0.0, p)))

    def test_trajectory_needs_a_sample(self):
        with pytest.raises(ValueError):
            Trajectory(samples=())
