"""Aggregation and BEV rasterization against brute-force oracles."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radarplace.dpr import DynamicMask
from radarplace.raster import (AggregatedScan, RadarImage, RasterConfig,
                               aggregate_scans, load_image, rasterize,
                               save_image, window_indices)
from radarplace.scanio import Pose2D, RadarPoint, RadarScan


def make_scan(sid, pose, xy, rcs=None):
    xy = np.atleast_2d(xy) if len(xy) else np.empty((0, 2))
    if rcs is None:
        rcs = np.arange(len(xy), dtype=float)
    points = [RadarPoint(float(x), float(y), 0.0, math.atan2(y, x), float(r))
              for (x, y), r in zip(xy, rcs)]
    return RadarScan(sid, 0, pose, points)


def agg_of(xy, pose=Pose2D(0, 0, 0), sid="c"):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return AggregatedScan(xy=xy, rcs_values=np.zeros(len(xy)),
                          source_scan_ids=[sid], center_scan_id=sid,
                          center_pose=pose)


class TestAggregateScans:
    def test_single_scan_identity(self):
        xy = [(1.0, 2.0), (-3.0, 0.5)]
        scan = make_scan("a", Pose2D(5.0, -2.0, 1.2), xy)
        agg = aggregate_scans([scan], 0)
        np.testing.assert_allclose(agg.xy, xy, atol=1e-12)

    def test_identical_poses_concatenate(self):
        pose = Pose2D(3.0, 4.0, 0.7)
        s1 = make_scan("a", pose, [(1.0, 0.0), (0.0, 1.0)])
        s2 = make_scan("b", pose, [(2.0, 2.0), (-1.0, -1.0)])
        agg = aggregate_scans([s1, s2], 0)
        assert agg.xy.shape == (4, 2)
        np.testing.assert_allclose(
            agg.xy, [(1, 0), (0, 1), (2, 2), (-1, -1)], atol=1e-12)

    def test_se2_transform_oracle(self):
        # Independent oracle: compose homogeneous SE(2) matrices.
        center = Pose2D(2.0, 1.0, 0.3)
        neighbor = Pose2D(3.0, 1.0, 0.3 + math.pi / 2)
        point = (1.0, 0.0)
        scan_c = make_scan("c", center, [])
        scan_n = make_scan("n", neighbor, [point])

        def se2(pose):
            c, s = math.cos(pose.yaw), math.sin(pose.yaw)
            return np.array([[c, -s, pose.x], [s, c, pose.y], [0, 0, 1]])

        expected = np.linalg.inv(se2(center)) @ se2(neighbor) @ np.array([*point, 1.0])
        agg = aggregate_scans([scan_c, scan_n], 0)
        np.testing.assert_allclose(agg.xy[0], expected[:2], atol=1e-12)

    def test_masks_drop_dynamic_points(self):
        pose = Pose2D(0, 0, 0)
        scan = make_scan("a", pose, [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
                         rcs=[10.0, 20.0, 30.0])
        mask = DynamicMask(labels=[1, 0, 1], ego_motion=None, branch="static_ego")
        agg = aggregate_scans([scan], 0, masks=[mask])
        assert agg.xy.shape == (2, 2)
        np.testing.assert_allclose(agg.rcs_values, [10.0, 30.0])

    def test_rcs_alignment_preserved(self):
        pose = Pose2D(1.0, 1.0, 0.4)
        s1 = make_scan("a", pose, [(1.0, 1.0)], rcs=[7.0])
        s2 = make_scan("b", Pose2D(2.0, 0.0, -0.4), [(0.5, 0.5)], rcs=[9.0])
        agg = aggregate_scans([s1, s2], 0)
        assert list(agg.rcs_values) == [7.0, 9.0]
        assert len(agg.rcs_values) == len(agg.xy)

    def test_window_indices_clamping(self):
        idx, clamped = window_indices(10, 0, 5)
        assert idx == [0, 0, 0, 1, 2]
        assert clamped
        idx, clamped = window_indices(10, 5, 5)
        assert idx == [3, 4, 5, 6, 7]
        assert not clamped
        idx, clamped = window_indices(10, 9, 5)
        assert idx == [7, 8, 9, 9, 9]
        assert clamped


class TestRasterize:
    def setup_method(self):
        self.cfg = RasterConfig(num_aggregated_scans=1, crop_range=100.0,
                                image_size=200, apply_dpr=False)

    def test_empty_cloud_all_zero(self):
        img = rasterize(agg_of(np.empty((0, 2))), self.cfg)
        assert img.grid.sum() == 0

    def test_center_point_pixel(self):
        img = rasterize(agg_of([(0.0, 0.0)]), self.cfg)
        assert img.grid.sum() == 1
        assert img.grid[100, 100] == 1

    def test_mapping_formula_corners(self):
        # (x, y) -> col = floor((x+R)/(2R)*S), row = floor((R-y)/(2R)*S)
        img = rasterize(agg_of([(-99.9999, 99.9999)]), self.cfg)
        assert img.grid[0, 0] == 1
        img = rasterize(agg_of([(99.9, -99.9)]), self.cfg)
        assert img.grid[199, 199] == 1

    def test_brute_force_projection_oracle(self):
        rng = np.random.default_rng(10)
        xy = rng.uniform(-150, 150, size=(500, 2))
        img = rasterize(agg_of(xy), self.cfg)

        expected = np.zeros((200, 200), dtype=np.uint8)
        for x, y in xy:
            if max(abs(x), abs(y)) >= 100.0:
                continue
            col = math.floor((x + 100.0) / 200.0 * 200)
            row = math.floor((100.0 - y) / 200.0 * 200)
            col = min(max(col, 0), 199)
            row = min(max(row, 0), 199)
            expected[row, col] = 1
        np.testing.assert_array_equal(img.grid, expected)

    def test_crop_discards_out_of_range(self):
        img = rasterize(agg_of([(100.0, 0.0), (0.0, -100.0), (150.0, 150.0)]),
                        self.cfg)
        assert img.grid.sum() == 0

    def test_idempotent_occupancy(self):
        xy = [(3.0, 4.0)]
        once = rasterize(agg_of(xy), self.cfg)
        twice = rasterize(agg_of(xy + xy), self.cfg)
        np.testing.assert_array_equal(once.grid, twice.grid)

    def test_cardinality_bound(self):
        rng = np.random.default_rng(2)
        xy = rng.uniform(-90, 90, size=(300, 2))
        img = rasterize(agg_of(xy), self.cfg)
        assert img.grid.sum() <= 300

    @settings(deadline=None, max_examples=50)
    @given(st.lists(st.tuples(st.floats(-120, 120, allow_nan=False),
                              st.floats(-120, 120, allow_nan=False)),
                    max_size=40))
    def test_grid_is_binary_property(self, pts):
        cfg = RasterConfig(num_aggregated_scans=1, crop_range=100.0,
                           image_size=64, apply_dpr=False)
        img = rasterize(agg_of(np.array(pts).reshape(-1, 2)), cfg)
        assert set(np.unique(img.grid)) <= {0, 1}
        in_range = sum(1 for x, y in pts if max(abs(x), abs(y)) < 100.0)
        assert img.grid.sum() <= in_range

    def test_translation_of_world_leaves_grid_unchanged(self):
        # Shifting the world and the center pose together does not move the
        # sensor-frame cloud, so the grid is identical.
        xy = [(5.0, 5.0), (-20.0, 3.0)]
        a = rasterize(agg_of(xy, pose=Pose2D(0, 0, 0)), self.cfg)
        b = rasterize(agg_of(xy, pose=Pose2D(111.0, -50.0, 0)), self.cfg)
        np.testing.assert_array_equal(a.grid, b.grid)


class TestImageIO:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = (rng.random((64, 64)) < 0.2).astype(np.uint8)
        img = RadarImage(grid=grid, center_pose=Pose2D(1.5, -2.5, 0.7),
                         scan_id="abc")
        path = tmp_path / "img.pgm"
        save_image(img, path)
        back = load_image(path)
        np.testing.assert_array_equal(back.grid, grid)
        assert back.scan_id == "abc"
        assert back.center_pose.x == pytest.approx(1.5)
        assert back.center_pose.yaw == pytest.approx(0.7)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            RasterConfig(image_size=65)
        with pytest.raises(ValueError):
            RasterConfig(num_aggregated_scans=4)
        with pytest.raises(ValueError):
            RasterConfig(crop_range=0.0)
