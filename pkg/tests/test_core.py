import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdperc.core import (
    Box2D,
    Box3D,
    Detection,
    DistanceMode,
    Frame,
    Instance,
    OcclusionLevel,
    Trajectory,
    box_corners_3d,
    box_corners_bev,
    center_distance,
    normalize_angle,
    pairwise_center_distances,
)

coord = st.floats(-50, 50, allow_nan=False)
extent = st.floats(0.05, 5.0)
angle = st.floats(-20.0, 20.0, allow_nan=False)
boxes = st.builds(Box3D, coord, coord, coord, extent, extent, extent, angle)


class TestBox3D:
    def test_rejects_non_positive_extent(self):
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, 0.0, 1, 1)
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, 1, -1, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Box3D(math.nan, 0, 0, 1, 1, 1)
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, 1, 1, 1, math.inf)

    @pytest.mark.parametrize("theta, expected", [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi, math.pi),
        (2 * math.pi + 0.5, 0.5),
        (-2 * math.pi - 0.5, -0.5),
    ])
    def test_theta_normalized(self, theta, expected):
        assert Box3D(0, 0, 0, 1, 1, 1, theta).theta == pytest.approx(expected, abs=1e-12)

    @given(angle)
    def test_normalized_range(self, t):
        v = normalize_angle(t)
        assert -math.pi < v <= math.pi
        assert math.isclose(math.cos(v), math.cos(t), abs_tol=1e-9)
        assert math.isclose(math.sin(v), math.sin(t), abs_tol=1e-9)

    def test_dict_fields(self):
        b = Box3D(1, 2, 3, 4, 5, 6, 0.5)
        assert b.to_dict() == {"x": 1.0, "y": 2.0, "z": 3.0, "l": 4.0, "w": 5.0, "h": 6.0, "theta": 0.5}
        np.testing.assert_array_equal(b.as_array(), [1, 2, 3, 4, 5, 6, 0.5])


class TestValueTypes:
    def test_box2d_positive(self):
        with pytest.raises(ValueError):
            Box2D(0, 0, 0, 1)

    def test_instance_validation(self):
        b = Box3D(0, 0, 0, 1, 1, 1)
        with pytest.raises(ValueError):
            Instance(-1, b)
        with pytest.raises(ValueError):
            Instance(0, b, num_points=-3)
        with pytest.raises(ValueError):
            Instance(0, b, occlusion=3)
        assert Instance(2, b, occlusion=1).occlusion is OcclusionLevel.PARTIAL

    def test_detection_finite(self):
        b = Box3D(0, 0, 0, 1, 1, 1)
        with pytest.raises(ValueError):
            Detection(b, math.nan)
        with pytest.raises(ValueError):
            Detection(b, 0.5, (math.inf, 0.0))
        assert Detection(b, 0.5).velocity is None

    def test_trajectory_ordering(self):
        with pytest.raises(ValueError):
            Trajectory(0, ())
        with pytest.raises(ValueError):
            Trajectory(0, ((0.0, (0, 0)), (0.0, (1, 1))))
        t = Trajectory(3, ((0.0, (0, 0)), (0.4, (1, 2))))
        np.testing.assert_array_equal(t.positions, [[0, 0], [1, 2]])
        np.testing.assert_array_equal(t.timestamps, [0.0, 0.4])

    def test_frame_centers(self):
        f = Frame(0, 0.0, "x.bin", [Instance(0, Box3D(1, 2, 0, 1, 1, 1)), Instance(1, Box3D(3, 4, 0, 1, 1, 1))])
        np.testing.assert_array_equal(f.centers_bev(), [[1, 2], [3, 4]])
        assert Frame(1, 0.4, "y.bin").centers_bev().shape == (0, 2)

    def test_distance_mode_parse(self):
        assert DistanceMode.parse("BEV") is DistanceMode.BEV_2D
        assert DistanceMode.parse("3d") is DistanceMode.EUCLID_3D
        with pytest.raises(ValueError):
            DistanceMode.parse("2.5d")


class TestCenterDistance:
    def test_identity(self):
        b = Box3D(1, 2, 3, 1, 1, 1)
        assert center_distance(b, b) == 0.0

    def test_345(self):
        a, b = Box3D(0, 0, 0, 1, 1, 1), Box3D(3, 4, 0, 1, 1, 1)
        assert center_distance(a, b, DistanceMode.EUCLID_3D) == 5.0

    def test_bev_ignores_z(self):
        a, b = Box3D(0, 0, 0, 1, 1, 1), Box3D(3, 4, 12, 1, 1, 1)
        assert center_distance(a, b, DistanceMode.BEV_2D) == 5.0
        assert center_distance(a, b, DistanceMode.EUCLID_3D) == 13.0

    @settings(max_examples=200)
    @given(boxes, boxes, boxes, st.sampled_from(list(DistanceMode)))
    def test_metric_axioms(self, a, b, c, mode):
        ab, ba = center_distance(a, b, mode), center_distance(b, a, mode)
        assert ab >= 0
        assert ab == ba
        assert center_distance(a, a, mode) == 0.0
        assert center_distance(a, c, mode) <= ab + center_distance(b, c, mode) + 1e-9

    @given(st.lists(boxes, min_size=0, max_size=6), st.lists(boxes, min_size=0, max_size=6),
           st.sampled_from(list(DistanceMode)))
    def test_pairwise_matches_scalar(self, a, b, mode):
        m = pairwise_center_distances(a, b, mode)
        assert m.shape == (len(a), len(b))
        for i, bi in enumerate(a):
            for j, bj in enumerate(b):
                assert m[i, j] == pytest.approx(center_distance(bi, bj, mode), rel=1e-12, abs=1e-12)


class TestCorners:
    def test_axis_aligned(self):
        c = box_corners_bev(Box3D(0, 0, 0, 2, 1, 1, 0.0))
        np.testing.assert_allclose(c, [[1, -0.5], [1, 0.5], [-1, 0.5], [-1, -0.5]])

    def test_quarter_turn_swaps_extents(self):
        c = box_corners_bev(Box3D(0, 0, 0, 2, 1, 1, math.pi / 2))
        np.testing.assert_allclose(np.sort(np.abs(c[:, 0])), [0.5] * 4, atol=1e-12)
        np.testing.assert_allclose(np.sort(np.abs(c[:, 1])), [1.0] * 4, atol=1e-12)

    def test_eighth_turn_radius(self):
        c = box_corners_bev(Box3D(0, 0, 0, 2, 1, 1, math.pi / 4))
        np.testing.assert_allclose(np.hypot(c[:, 0], c[:, 1]), math.sqrt(1 + 0.25), rtol=1e-12)
        # oracle: rotate the axis-aligned corners by the rotation matrix
        r = np.array([[math.cos(math.pi / 4), -math.sin(math.pi / 4)],
                      [math.sin(math.pi / 4), math.cos(math.pi / 4)]])
        np.testing.assert_allclose(c, box_corners_bev(Box3D(0, 0, 0, 2, 1, 1)) @ r.T, atol=1e-12)

    @given(boxes)
    def test_counterclockwise(self, b):
        c = box_corners_bev(b)
        x, y = c[:, 0], c[:, 1]
        signed_area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert signed_area == pytest.approx(b.l * b.w, rel=1e-9)

    @given(boxes, st.floats(-6.0, 6.0))
    def test_rotation_equivariance(self, b, delta):
        turned = Box3D(b.x, b.y, b.z, b.l, b.w, b.h, b.theta + delta)
        c0 = box_corners_bev(b) - [b.x, b.y]
        r = np.array([[math.cos(delta), -math.sin(delta)], [math.sin(delta), math.cos(delta)]])
        np.testing.assert_allclose(box_corners_bev(turned) - [b.x, b.y], c0 @ r.T, atol=1e-9)

    @given(boxes)
    def test_full_turn_invariance(self, b):
        other = Box3D(b.x, b.y, b.z, b.l, b.w, b.h, b.theta + 2 * math.pi)
        np.testing.assert_allclose(box_corners_bev(other), box_corners_bev(b), atol=1e-9)

    def test_corners_3d(self):
        c = box_corners_3d(Box3D(0, 0, 1, 2, 1, 4))
        assert c.shape == (8, 3)
        np.testing.assert_array_equal(c[:4, 2], -1.0)
        np.testing.assert_array_equal(c[4:, 2], 3.0)
