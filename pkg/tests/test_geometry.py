import numpy as np
import pytest

from sceneraster.geometry import (
    CameraIntrinsics,
    CameraRig,
    SE3Pose,
    compose,
    invert,
    project,
    project_points,
    vec3,
)

from conftest import random_pose


def vga_rig(z_near=0.1):
    return CameraRig(
        intrinsics=CameraIntrinsics(100.0, 100.0, 320.0, 240.0),
        world_to_camera=SE3Pose.identity(),
        width=640,
        height=480,
        z_near=z_near,
    )


def oracle_project(point, rig):
    """Independent 3x4 homogeneous matrix-composition oracle."""
    k = rig.intrinsics.matrix()
    rt = np.hstack([
        rig.world_to_camera.rotation,
        rig.world_to_camera.translation.reshape(3, 1),
    ])
    p = k @ rt  # 3x4
    uvw = p @ np.append(np.asarray(point, dtype=float), 1.0)
    if uvw[2] < rig.z_near:
        return None
    return uvw[0] / uvw[2], uvw[1] / uvw[2], uvw[2]


class TestProject:
    def test_optical_axis_point_maps_to_principal_point(self):
        p = project(vec3(0, 0, 5), vga_rig())
        assert p is not None
        assert (p.u, p.v, p.depth) == (320.0, 240.0, 5.0)

    def test_point_closer_than_near_plane_is_discarded(self):
        assert project(vec3(0, 0, 0.05), vga_rig()) is None

    def test_off_axis_point_matches_matrix_oracle(self):
        p = project(vec3(1, 2, 4), vga_rig())
        assert p is not None
        assert (p.u, p.v, p.depth) == (345.0, 290.0, 4.0)
        assert oracle_project([1, 2, 4], vga_rig()) == pytest.approx(
            (345.0, 290.0, 4.0), abs=1e-12
        )

    def test_agrees_with_oracle_on_random_rigs(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            rig = CameraRig(
                intrinsics=CameraIntrinsics(
                    rng.uniform(50, 2000), rng.uniform(50, 2000),
                    rng.uniform(-100, 700), rng.uniform(-100, 700),
                ),
                world_to_camera=random_pose(rng),
                width=640, height=480,
                z_near=rng.uniform(0.01, 2.0),
            )
            point = rng.uniform(-20, 20, size=3)
            got = project(point, rig)
            want = oracle_project(point, rig)
            if want is None:
                assert got is None
            else:
                assert got is not None
                assert got.u == pytest.approx(want[0], abs=1e-9)
                assert got.v == pytest.approx(want[1], abs=1e-9)
                assert got.depth == pytest.approx(want[2], abs=1e-9)

    def test_ray_through_camera_center_keeps_uv(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            pose = random_pose(rng)
            rig = CameraRig(
                intrinsics=CameraIntrinsics(120.0, 130.0, 320.0, 240.0),
                world_to_camera=pose, width=640, height=480,
            )
            center = invert(pose).translation
            direction = rng.normal(size=3)
            base = center + direction
            p1 = project(base, rig)
            if p1 is None:
                continue
            scale = rng.uniform(1.5, 4.0)
            p2 = project(center + scale * direction, rig)
            assert p2 is not None
            assert p2.u == pytest.approx(p1.u, abs=1e-9)
            assert p2.v == pytest.approx(p1.v, abs=1e-9)
            assert p2.depth == pytest.approx(scale * p1.depth, rel=1e-9)

    def test_extrinsic_equivariance(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            e = random_pose(rng)
            extra = random_pose(rng)
            point = rng.uniform(-5, 5, size=3)
            rig_a = CameraRig(CameraIntrinsics(90.0, 85.0, 32.0, 24.0), e, 64, 48)
            rig_b = CameraRig(
                CameraIntrinsics(90.0, 85.0, 32.0, 24.0), compose(e, extra), 64, 48
            )
            a = project(point, rig_a)
            b = project(invert(extra).apply(point), rig_b)
            if a is None:
                assert b is None
                continue
            assert b is not None
            assert a.u == pytest.approx(b.u, abs=1e-9)
            assert a.v == pytest.approx(b.v, abs=1e-9)
            assert a.depth == pytest.approx(b.depth, abs=1e-9)

    def test_vectorized_projection_matches_scalar(self):
        rng = np.random.default_rng(11)
        rig = CameraRig(
            CameraIntrinsics(100.0, 110.0, 320.0, 240.0), random_pose(rng), 640, 480
        )
        pts = rng.uniform(-10, 10, size=(200, 3))
        uvd, visible = project_points(pts, rig)
        for i in range(len(pts)):
            got = project(pts[i], rig)
            if got is None:
                assert not visible[i]
            else:
                # scalar and batched transforms may differ in the last ulp
                assert visible[i]
                assert uvd[i, 0] == pytest.approx(got.u, rel=1e-12)
                assert uvd[i, 1] == pytest.approx(got.v, rel=1e-12)
                assert uvd[i, 2] == pytest.approx(got.depth, rel=1e-12)


class TestSE3:
    def test_identity_compose_is_identity(self):
        p = random_pose(np.random.default_rng(0))
        q = compose(SE3Pose.identity(), p)
        np.testing.assert_array_equal(q.rotation, p.rotation)
        np.testing.assert_array_equal(q.translation, p.translation)

    def test_compose_with_inverse_is_identity(self):
        p = random_pose(np.random.default_rng(1))
        q = compose(p, invert(p))
        assert np.max(np.abs(q.rotation - np.eye(3))) < 1e-9
        assert np.max(np.abs(q.translation)) < 1e-9

    def test_compose_matches_homogeneous_matrix_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a, b = random_pose(rng), random_pose(rng)
            m = a.matrix() @ b.matrix()
            c = compose(a, b)
            assert np.max(np.abs(c.matrix() - m)) < 1e-9

    def test_invert_matches_matrix_inverse_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            p = random_pose(rng)
            np.testing.assert_allclose(
                invert(p).matrix(), np.linalg.inv(p.matrix()), atol=1e-9
            )

    def test_pure_translation_inverts_to_negated_translation(self):
        p = SE3Pose(np.eye(3), [1.0, -2.0, 3.0])
        q = invert(p)
        np.testing.assert_array_equal(q.rotation, np.eye(3))
        np.testing.assert_array_equal(q.translation, [-1.0, 2.0, -3.0])

    def test_rotations_stay_orthonormal_after_1000_compositions(self):
        rng = np.random.default_rng(6)
        acc = SE3Pose.identity()
        step = random_pose(rng)
        for _ in range(1000):
            acc = compose(acc, step)
        r = acc.rotation
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-7

    def test_apply_matches_compose_semantics(self):
        rng = np.random.default_rng(8)
        a, b = random_pose(rng), random_pose(rng)
        x = rng.normal(size=3)
        np.testing.assert_allclose(
            compose(a, b).apply(x), a.apply(b.apply(x)), atol=1e-9
        )


class TestValidation:
    def test_non_orthonormal_rotation_rejected(self):
        with pytest.raises(ValueError, match="orthonormal"):
            SE3Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_reflection_rejected(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError, match="determinant"):
            SE3Pose(r, np.zeros(3))

    def test_nonfinite_translation_rejected(self):
        with pytest.raises(ValueError):
            SE3Pose(np.eye(3), [0.0, np.nan, 0.0])

    def test_nonpositive_focal_rejected(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(0.0, 100.0, 10.0, 10.0)

    def test_nonpositive_z_near_rejected(self):
        with pytest.raises(ValueError):
            CameraRig(CameraIntrinsics(1.0, 1.0, 0.0, 0.0),
                      SE3Pose.identity(), 10, 10, z_near=0.0)

    def test_nonfinite_vec3_rejected(self):
        with pytest.raises(ValueError):
            vec3(1.0, np.inf, 0.0)

    def test_intrinsics_matrix_layout(self):
        k = CameraIntrinsics(100.0, 110.0, 320.0, 240.0).matrix()
        assert k[2, 2] == 1.0 and k[0, 1] == 0.0
        assert k[0, 0] == 100.0 and k[1, 1] == 110.0
        assert k[0, 2] == 320.0 and k[1, 2] == 240.0
