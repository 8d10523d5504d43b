import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatstream.camera import (CameraPose, Intrinsics, MoveAction, Z_NEAR,
                                move_relative, pose_from_degrees, project,
                                project_points, rotation_from_angles, scale_intrinsics,
                                world_to_camera)


def oracle_project(pose: CameraPose, point, intr: Intrinsics):
    """Independent projection path: rotation assembled column-by-column from
    spherical trig, then a homogeneous K-matrix multiply."""
    az, el = pose.azimuth, pose.elevation
    right = np.array([math.cos(az), 0.0, -math.sin(az)])
    down = np.array([math.sin(az) * math.sin(el), math.cos(el), math.cos(az) * math.sin(el)])
    forward = np.array([math.sin(az) * math.cos(el), -math.sin(el), math.cos(az) * math.cos(el)])
    rot = np.column_stack([right, down, forward])

    t4 = np.eye(4)
    t4[:3, :3] = rot.T
    t4[:3, 3] = -rot.T @ np.asarray(pose.translation)
    p_cam = t4 @ np.array([*point, 1.0])

    k = np.array([[intr.fx, 0, intr.cx],
                  [0, intr.fy, intr.cy],
                  [0, 0, 1.0]])
    uvw = k @ p_cam[:3]
    lam = p_cam[2]
    return uvw[0] / lam, uvw[1] / lam, lam


INTR = Intrinsics(fx=500.0, fy=480.0, cx=640.0, cy=360.0, width=1280, height=720)


class TestRotation:
    def test_zero_angles_is_identity(self):
        assert np.allclose(rotation_from_angles(0.0, 0.0), np.eye(3), atol=1e-15)

    def test_quarter_turn_faces_plus_x(self):
        rot = rotation_from_angles(math.pi / 2, 0.0)
        forward = rot @ np.array([0.0, 0.0, 1.0])
        assert np.allclose(forward, [1.0, 0.0, 0.0], atol=1e-12)

    @given(st.floats(-10, 10), st.floats(-1.5, 1.5))
    def test_always_in_so3(self, azimuth, elevation):
        rot = rotation_from_angles(azimuth, elevation)
        assert np.allclose(rot.T @ rot, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(rot) - 1.0) < 1e-9

    def test_forward_formula(self):
        az, el = 0.7, -0.3
        rot = rotation_from_angles(az, el)
        expected = np.array([math.sin(az) * math.cos(el),
                             -math.sin(el),
                             math.cos(az) * math.cos(el)])
        assert np.allclose(rot @ [0, 0, 1], expected, atol=1e-14)


class TestWorldToCamera:
    def test_identity_pose(self):
        view = world_to_camera(CameraPose(0.0, 0.0))
        assert np.allclose(view.world_to_camera, np.eye(4), atol=1e-15)

    def test_pure_translation(self):
        view = world_to_camera(CameraPose(0.0, 0.0, (1.0, 2.0, 3.0)))
        assert np.allclose(view.world_to_camera[:3, 3], [-1.0, -2.0, -3.0])

    def test_camera_center_maps_to_origin(self):
        pose = CameraPose(0.9, 0.4, (3.0, -1.0, 2.5))
        view = world_to_camera(pose)
        mapped = view.world_to_camera @ np.array([*pose.translation, 1.0])
        assert np.allclose(mapped, [0, 0, 0, 1], atol=1e-12)

    def test_bottom_row(self):
        view = world_to_camera(CameraPose(1.2, -0.8, (5.0, 6.0, 7.0)))
        assert np.array_equal(view.world_to_camera[3], [0, 0, 0, 1])


class TestProject:
    def test_on_axis_point_hits_principal_point(self):
        view = world_to_camera(CameraPose(0.0, 0.0))
        result = project((0.0, 0.0, 5.0), view, INTR)
        assert result.visible
        assert result.u == pytest.approx(INTR.cx)
        assert result.v == pytest.approx(INTR.cy)
        assert result.depth == pytest.approx(5.0)

    def test_hand_computed_pixel(self):
        view = world_to_camera(CameraPose(0.0, 0.0))
        result = project((1.0, 0.0, 5.0), view, INTR)
        assert result.u == pytest.approx(640.0 + 500.0 * (1.0 / 5.0))

    def test_behind_camera_flagged(self):
        view = world_to_camera(CameraPose(0.0, 0.0))
        result = project((0.0, 0.0, -1.0), view, INTR)
        assert not result.visible

    def test_near_plane_boundary(self):
        view = world_to_camera(CameraPose(0.0, 0.0))
        assert not project((0.0, 0.0, Z_NEAR), view, INTR).visible
        assert project((0.0, 0.0, Z_NEAR + 1e-6), view, INTR).visible

    def test_matches_oracle_on_random_pairs(self):
        # Points are sampled inside the view frustum (depth >= 0.5) so the
        # 1e-9 px agreement is meaningful; quasi-grazing points project to
        # ~1e5 px where float64 itself cannot hold an absolute 1e-9.
        rng = np.random.default_rng(42)
        for _ in range(1000):
            pose = CameraPose(rng.uniform(-math.pi, math.pi),
                              rng.uniform(-1.4, 1.4),
                              tuple(rng.uniform(-10, 10, 3)))
            view = world_to_camera(pose)
            z = rng.uniform(0.5, 50.0)
            cam_pt = np.array([rng.uniform(-1.5, 1.5) * z,
                               rng.uniform(-1.5, 1.5) * z,
                               z])
            point = view.rotation @ cam_pt + np.asarray(pose.translation)
            got = project(point, view, INTR)
            u, v, lam = oracle_project(pose, point, INTR)
            assert got.visible
            assert abs(got.u - u) < 1e-9
            assert abs(got.v - v) < 1e-9
            assert abs(got.depth - lam) < 1e-9

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        pose = CameraPose(0.5, -0.2, (1.0, 0.5, -2.0))
        view = world_to_camera(pose)
        pts = rng.uniform(-10, 10, (200, 3))
        u, v, z, visible = project_points(pts, view, INTR)
        for i in range(len(pts)):
            single = project(pts[i], view, INTR)
            assert single.visible == visible[i]
            if single.visible:
                assert single.u == pytest.approx(u[i], rel=1e-12)
                assert single.v == pytest.approx(v[i], rel=1e-12)


class TestScaleIntrinsics:
    def test_halving(self):
        intr = Intrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, width=1280, height=720)
        scaled = scale_intrinsics(intr, 640, 360)
        assert scaled.fx == pytest.approx(500.0)
        assert scaled.fy == pytest.approx(500.0)
        assert scaled.cx == pytest.approx(320.0)
        assert scaled.cy == pytest.approx(180.0)

    def test_fov_preserved(self):
        intr = Intrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, width=1280, height=720)
        scaled = scale_intrinsics(intr, 320, 180)
        assert scaled.fx == pytest.approx(250.0)
        assert abs(intr.horizontal_fov() - scaled.horizontal_fov()) < 1e-9

    def test_identity_resize(self):
        intr = Intrinsics(fx=777.0, fy=700.0, cx=600.0, cy=350.0, width=1280, height=720)
        assert scale_intrinsics(intr, 1280, 720) == intr

    def test_random_rescalings_keep_fov(self):
        rng = np.random.default_rng(9)
        intr = Intrinsics(fx=1108.5, fy=1108.5, cx=640.0, cy=360.0, width=1280, height=720)
        for _ in range(20):
            w = int(rng.integers(64, 4096))
            h = int(rng.integers(64, 4096))
            scaled = scale_intrinsics(intr, w, h)
            assert abs(intr.horizontal_fov() - scaled.horizontal_fov()) < 1e-9


class TestMoveRelative:
    def test_forward_facing_plus_z(self):
        pose = move_relative(CameraPose(0.0, 0.0), MoveAction.FORWARD, 1.0)
        assert pose.translation == (0.0, 0.0, 1.0)

    def test_forward_facing_plus_x(self):
        pose = move_relative(CameraPose(math.pi / 2, 0.0), MoveAction.FORWARD, 1.0)
        assert pose.translation[0] == pytest.approx(1.0)
        assert pose.translation[2] == pytest.approx(0.0, abs=1e-15)

    def test_pitch_clamped_near_pole(self):
        pose = CameraPose(0.0, math.pi / 2 - 2e-4)
        moved = move_relative(pose, MoveAction.PITCH, 1.0)
        assert moved.elevation == pytest.approx(math.pi / 2 - 1e-4)

    def test_vertical_moves_touch_only_y(self):
        pose = CameraPose(0.3, 0.1, (1.0, 2.0, 3.0))
        up = move_relative(pose, MoveAction.UP, 0.5)
        assert up.translation == (1.0, 1.5, 3.0)
        down = move_relative(pose, MoveAction.DOWN, 0.5)
        assert down.translation == (1.0, 2.5, 3.0)

    def test_left_right_are_opposite(self):
        pose = CameraPose(0.8, 0.0, (0.0, 0.0, 0.0))
        left = move_relative(pose, MoveAction.LEFT, 2.0)
        right = move_relative(pose, MoveAction.RIGHT, 2.0)
        assert np.allclose(np.asarray(left.translation), -np.asarray(right.translation))

    def test_move_then_opposite_restores_exactly_on_grid(self):
        # Exact restoration holds whenever the intermediate sum rounds back;
        # axis-aligned azimuths with dyadic steps guarantee it. Arbitrary
        # floats can legitimately differ by one rounding (see the
        # ulp-bounded property below).
        for az in (0.0, math.pi / 2):
            for step in (1.0, 0.25, 8.0):
                for action, opposite in ((MoveAction.FORWARD, MoveAction.BACKWARD),
                                         (MoveAction.LEFT, MoveAction.RIGHT),
                                         (MoveAction.UP, MoveAction.DOWN)):
                    pose = CameraPose(az, 0.3, (4.0, -2.0, 1.5))
                    roundtrip = move_relative(move_relative(pose, action, step),
                                              opposite, step)
                    assert roundtrip.translation == pose.translation

    @given(st.floats(-6.0, 6.0),
           st.floats(-1.4, 1.4),
           st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
           st.floats(1e-3, 1e2),
           st.sampled_from([MoveAction.FORWARD, MoveAction.LEFT, MoveAction.UP]))
    @settings(max_examples=200)
    def test_move_then_opposite_restores_within_ulp(self, az, el, translation, step, action):
        opposite = {MoveAction.FORWARD: MoveAction.BACKWARD,
                    MoveAction.LEFT: MoveAction.RIGHT,
                    MoveAction.UP: MoveAction.DOWN}[action]
        pose = CameraPose(az, el, translation)
        roundtrip = move_relative(move_relative(pose, action, step), opposite, step)
        for got, want in zip(roundtrip.translation, pose.translation):
            assert abs(got - want) <= 2 * math.ulp(max(abs(want), step))


class TestPoseValidation:
    def test_elevation_clamped_on_construction(self):
        pose = CameraPose(0.0, 2.0)
        assert pose.elevation == pytest.approx(math.pi / 2 - 1e-4)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            CameraPose(float("nan"), 0.0)

    def test_degrees_boundary(self):
        pose = pose_from_degrees(180.0, 45.0, (1.0, 2.0, 3.0))
        assert pose.azimuth == pytest.approx(math.pi)
        assert pose.elevation == pytest.approx(math.pi / 4)


class TestIntrinsicsValidation:
    def test_negative_focal_rejected(self):
        with pytest.raises(ValueError):
            Intrinsics(fx=-1.0, fy=1.0, cx=0.0, cy=0.0, width=10, height=10)

    def test_principal_point_out_of_bounds(self):
        with pytest.raises(ValueError):
            Intrinsics(fx=1.0, fy=1.0, cx=11.0, cy=0.0, width=10, height=10)
