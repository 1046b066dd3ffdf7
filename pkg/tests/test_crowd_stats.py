import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_frame, make_instance
from crowdperc.crowd_stats import (
    CrowdLevel,
    crowd_level,
    crowd_level_histogram,
    dataset_stats,
    density_k,
    density_profile,
    occlusion_histogram,
    person_per_range,
    points_vs_distance,
)


def frame_at(points, **kw):
    return make_frame([make_instance(x, y, track_id=i, **kw) for i, (x, y) in enumerate(points)])


centers_st = st.lists(st.tuples(st.floats(-30, 30), st.floats(-30, 30)), max_size=25)


class TestDensity:
    def test_single(self):
        assert density_k(frame_at([(1.0, 1.0)]), 2.0) == 0.0

    def test_empty(self):
        assert density_k(frame_at([]), 5.0) == 0.0

    def test_pair(self):
        assert density_k(frame_at([(0.0, 0.0), (1.0, 0.0)]), 2.0) == 1.0

    def test_radius_inclusive(self):
        assert density_k(frame_at([(0.0, 0.0), (2.0, 0.0)]), 2.0) == 1.0

    def test_bev_ignores_height(self):
        f = make_frame([make_instance(0, 0, z=0.0, track_id=0), make_instance(1, 0, z=50.0, track_id=1)])
        assert density_k(f, 2.0) == 1.0

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            density_k(frame_at([(0, 0)]), 0.0)

    def test_brute_force_50(self, rng):
        pts = [tuple(p) for p in rng.uniform(-15, 15, (50, 2))]
        expected = sum(oracles.neighbour_counts(pts, 5.0)) / 50
        assert density_k(frame_at(pts), 5.0) == pytest.approx(expected, abs=1e-12)

    @given(centers_st)
    def test_monotone_in_radius(self, pts):
        f = frame_at(pts)
        vals = [density_k(f, r) for r in (2.0, 5.0, 10.0)]
        assert vals == sorted(vals)
        assert all(v >= 0 for v in vals)

    @settings(max_examples=50)
    @given(centers_st, st.floats(-math.pi, math.pi), st.floats(-100, 100), st.floats(-100, 100))
    def test_rigid_invariance(self, pts, ang, tx, ty):
        c, s = math.cos(ang), math.sin(ang)
        moved = [(c * x - s * y + tx, s * x + c * y + ty) for x, y in pts]
        base = oracles.neighbour_counts(pts, 5.0)
        # only compare when no pair sits within rounding distance of the radius
        for a, b in oracles.all_pairs(pts):
            if abs(math.hypot(a[0] - b[0], a[1] - b[1]) - 5.0) < 1e-9:
                return
        assert density_k(frame_at(moved), 5.0) == pytest.approx(sum(base) / max(len(pts), 1), abs=1e-12)


class TestCrowdLevel:
    @pytest.mark.parametrize("count, level", [
        (0, 0), (9, 0), (10, 1), (19, 1), (20, 2), (29, 2), (30, 3), (31, 3), (500, 3),
    ])
    def test_boundaries(self, count, level):
        assert crowd_level(count) == level
        assert crowd_level(frame_at([(float(i), 0.0) for i in range(count)])) == CrowdLevel(level)

    def test_histogram(self):
        frames = [frame_at([(0.0, float(i)) for i in range(n)]) for n in (0, 5, 12, 25, 40, 41)]
        assert crowd_level_histogram(frames) == {0: 2, 1: 1, 2: 1, 3: 2}


class TestPersonPerRange:
    def test_reference_row(self):
        # Person/Range 0.4 with 20 pedestrians per frame and a 50 m scan diameter
        assert person_per_range(frame_at([(float(i), 0.0) for i in range(20)]), 50.0) == pytest.approx(0.4)

    def test_empty(self):
        assert person_per_range(frame_at([]), 50.0) == 0.0

    def test_ten_over_hundred(self):
        assert person_per_range(frame_at([(float(i), 0.0) for i in range(10)]), 100.0) == pytest.approx(0.1)

    def test_bad_diameter(self):
        with pytest.raises(ValueError):
            person_per_range(frame_at([]), 0.0)


class TestPointsVsDistance:
    def test_single(self):
        f = make_frame([make_instance(3.0, 0.0, num_points=100)])
        assert points_vs_distance([f], 5.0) == {0: 100.0}

    def test_empty(self):
        assert points_vs_distance([], 5.0) == {}

    def test_bins_and_means(self):
        f = make_frame([make_instance(3.0, 4.0, num_points=10, track_id=0),    # d = 5 -> bin 1
                        make_instance(0.0, 6.0, num_points=30, track_id=1),    # d = 6 -> bin 1
                        make_instance(12.0, 0.0, num_points=7, track_id=2)])   # bin 2
        assert points_vs_distance([f], 5.0) == {1: 20.0, 2: 7.0}

    def test_bad_width(self):
        with pytest.raises(ValueError):
            points_vs_distance([], -1.0)


class TestHistogramsAndProfile:
    @given(st.lists(st.lists(st.integers(0, 2), max_size=8), max_size=6))
    def test_occlusion_total(self, levels):
        frames = [make_frame([make_instance(float(i), 0.0, track_id=i, occlusion=o) for i, o in enumerate(fr)])
                  for fr in levels]
        hist = occlusion_histogram(frames)
        assert set(hist) == {0, 1, 2}
        assert sum(hist.values()) == sum(len(fr) for fr in levels)

    def test_profile_pools_pedestrians(self):
        a = frame_at([(0.0, 0.0), (1.0, 0.0), (1.5, 0.0)])   # counts at r=2: 2, 2, 2
        b = frame_at([(0.0, 0.0)])                           # 0
        p = density_profile([a, b], scan_diameter=10.0)
        assert p.density_2 == pytest.approx(6 / 4)
        assert p.person_per_frame == 2.0
        assert p.person_per_range == pytest.approx(0.2)
        assert p.density_2 <= p.density_5 <= p.density_10

    def test_dataset_stats_json(self):
        class Seq:
            frames = (frame_at([(3.0, 0.0), (8.0, 0.0)]),)

        d = dataset_stats([Seq(), Seq()], scan_diameter=50.0, bin_width=5.0)
        assert d["num_sequences"] == 2 and d["num_frames"] == 2 and d["num_instances"] == 4
        assert [b["bin"] for b in d["points_vs_distance"]] == [0, 1]
        json.dumps(d)
        np.testing.assert_allclose(d["density"]["person_per_frame"], 2.0)
