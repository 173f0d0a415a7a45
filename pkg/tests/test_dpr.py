"""Dynamic point removal: profile fitting, RANSAC, branch logic."""
import math

import numpy as np
import pytest

from radarplace.dpr import (DegenerateSceneError, DprConfig, SingularFitError,
                            fit_velocity_profile, ransac_ego_motion,
                            remove_dynamic_points)
from radarplace.scanio import Pose2D, RadarPoint, RadarScan, wrap_angle


def profile(v_s, alpha, theta):
    return -v_s * np.cos(alpha - np.asarray(theta))


def scan_from(vr, theta, rcs=None, sid="scan"):
    vr = np.asarray(vr, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if rcs is None:
        rcs = np.zeros_like(vr)
    points = [RadarPoint(math.cos(t), math.sin(t), float(v), float(wrap_angle(t)),
                         float(r))
              for v, t, r in zip(vr, theta, rcs)]
    return RadarScan(scan_id=sid, timestamp_us=0, pose=Pose2D(0, 0, 0),
                     points=points)


class TestFitVelocityProfile:
    def test_exact_interpolation(self):
        theta = np.array([0.0, math.pi / 2, math.pi])
        vr = profile(10.0, 0.0, theta)
        a, b = fit_velocity_profile(vr, theta)
        assert a == pytest.approx(-10.0, abs=1e-12)
        assert b == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_velocities(self):
        theta = np.linspace(-1.0, 2.0, 5)
        a, b = fit_velocity_profile(np.zeros(5), theta)
        assert a == pytest.approx(0.0, abs=1e-12)
        assert b == pytest.approx(0.0, abs=1e-12)

    def test_matches_independent_normal_equations(self):
        # Independent oracle: explicit normal-equations solve via lstsq.
        rng = np.random.default_rng(7)
        theta = rng.uniform(-math.pi, math.pi, 50)
        vr = profile(8.0, math.pi / 3, theta) + rng.normal(0, 0.05, 50)
        a, b = fit_velocity_profile(vr, theta)
        design = np.column_stack([np.cos(theta), np.sin(theta)])
        expected, *_ = np.linalg.lstsq(design, vr, rcond=None)
        assert a == pytest.approx(expected[0], abs=1e-9)
        assert b == pytest.approx(expected[1], abs=1e-9)

    def test_singular_when_azimuths_collinear(self):
        theta = np.array([0.4, 0.4, 0.4 + math.pi])
        with pytest.raises(SingularFitError):
            fit_velocity_profile(np.array([1.0, 1.0, -1.0]), theta)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_velocity_profile([1.0], [0.0])


class TestRansacEgoMotion:
    def test_noiseless_consensus(self):
        rng = np.random.default_rng(0)
        theta = rng.uniform(-math.pi, math.pi, 100)
        vr = profile(12.0, -math.pi / 2, theta)
        est, inliers = ransac_ego_motion(vr, theta, DprConfig(rng_seed=1))
        assert est.speed == pytest.approx(12.0, abs=1e-9)
        assert est.heading == pytest.approx(-math.pi / 2, abs=1e-9)
        assert inliers.all()
        assert est.inlier_count == 100

    def test_planted_outliers_flagged(self):
        rng = np.random.default_rng(3)
        v_s, alpha = 9.0, 0.7
        theta = rng.uniform(-math.pi, math.pi, 100)
        vr = profile(v_s, alpha, theta) + rng.normal(0, 0.02, 100)
        vr[80:] += 5.0  # 20 planted movers
        est, inliers = ransac_ego_motion(vr, theta, DprConfig(rng_seed=3))
        assert not inliers[80:].any()
        assert inliers[:80].all()
        assert abs(est.speed - v_s) < 0.05

    def test_two_point_minimal_scene(self):
        theta = np.array([0.0, math.pi / 2])
        vr = profile(4.0, 0.3, theta)
        est, inliers = ransac_ego_motion(vr, theta, DprConfig(rng_seed=0))
        assert inliers.all()
        assert est.speed == pytest.approx(4.0, abs=1e-9)
        assert est.heading == pytest.approx(0.3, abs=1e-9)

    def test_too_few_points_raises(self):
        with pytest.raises(DegenerateSceneError):
            ransac_ego_motion([1.0], [0.0], DprConfig())

    def test_inliers_reproduced_within_tau(self):
        rng = np.random.default_rng(5)
        theta = rng.uniform(-math.pi, math.pi, 60)
        vr = profile(6.0, -1.1, theta) + rng.normal(0, 0.04, 60)
        cfg = DprConfig(rng_seed=5)
        est, inliers = ransac_ego_motion(vr, theta, cfg)
        predicted = profile(est.speed, est.heading, theta)
        assert np.all(np.abs(vr[inliers] - predicted[inliers])
                      < cfg.fit_threshold_tau)

    def test_heading_recovery_over_grid(self):
        # Noiseless recovery of (v_s, alpha) across speeds and headings.
        rng = np.random.default_rng(8)
        for v_s in (0.5, 3.0, 15.0):
            for alpha in (-3.0, -1.0, 0.0, 2.5):
                theta = rng.uniform(-math.pi, math.pi, 40)
                est, _ = ransac_ego_motion(profile(v_s, alpha, theta), theta,
                                           DprConfig(rng_seed=2))
                assert est.speed == pytest.approx(v_s, abs=1e-9)
                diff = wrap_angle(est.heading - alpha)
                assert abs(diff) < 1e-9


class TestRemoveDynamicPoints:
    def test_all_static_scan(self):
        theta = np.linspace(-3, 3, 20)
        mask = remove_dynamic_points(scan_from(np.zeros(20), theta), DprConfig())
        assert mask.branch == "static_ego"
        assert mask.labels == [1] * 20
        assert mask.ego_motion is None

    def test_static_branch_threshold_rule(self):
        vr = np.array([0.0, 0.5, -0.7, 1.0, -2.0, 0.2, 0.3, 0.1, -0.4, 0.6])
        theta = np.linspace(-3, 3, 10)
        cfg = DprConfig()
        mask = remove_dynamic_points(scan_from(vr, theta), cfg)
        assert mask.branch == "static_ego"  # p = 0.8 > 0.5
        for lab, v in zip(mask.labels, vr):
            assert lab == (1 if abs(v) < cfg.static_velocity_threshold else 0)

    def test_boundary_fraction_fires_moving_branch(self):
        # p exactly 0.5 is NOT > 0.5, so the moving-ego branch runs.
        rng = np.random.default_rng(1)
        theta = rng.uniform(-math.pi, math.pi, 20)
        vr = np.concatenate([np.full(10, 0.5), np.full(10, 3.0)])
        mask = remove_dynamic_points(scan_from(vr, theta), DprConfig())
        assert mask.branch == "moving_ego"

    def test_two_planted_movers_identified(self):
        # Moving ego with profile-consistent statics plus two movers.
        rng = np.random.default_rng(4)
        theta = rng.uniform(-math.pi, math.pi, 40)
        vr = profile(7.0, 0.2, theta) + rng.normal(0, 0.02, 40)
        vr[10] += 4.0
        vr[25] -= 3.0
        mask = remove_dynamic_points(scan_from(vr, theta), DprConfig(rng_seed=4))
        assert mask.branch == "moving_ego"
        assert mask.labels[10] == 0
        assert mask.labels[25] == 0
        assert sum(mask.labels) == 38

    def test_empty_scan(self):
        scan = RadarScan("e", 0, Pose2D(0, 0, 0), [])
        mask = remove_dynamic_points(scan, DprConfig())
        assert mask.labels == []

    def test_negative_velocities_count_as_fast(self):
        # Signed radial velocities: approaching objects must not count static.
        vr = np.full(10, -3.0)
        theta = np.linspace(-3, 3, 10)
        mask = remove_dynamic_points(scan_from(vr, theta), DprConfig())
        assert mask.branch == "moving_ego"

    def test_degenerate_fallback_all_static(self):
        # Two points cannot be split azimuthally -> singular minimal samples.
        scan = scan_from([5.0, 5.0], [0.3, 0.3])
        cfg = DprConfig(ransac_min_inliers=3)
        mask = remove_dynamic_points(scan, cfg)
        assert mask.degenerate
        assert mask.labels == [1, 1]

    def test_label_length_invariant(self):
        rng = np.random.default_rng(9)
        for n in (0, 1, 2, 5, 33):
            theta = rng.uniform(-math.pi, math.pi, n)
            vr = rng.normal(0, 2.0, n)
            mask = remove_dynamic_points(scan_from(vr, theta, sid=f"n{n}"),
                                         DprConfig())
            assert len(mask.labels) == n

    def test_deterministic_masks(self):
        rng = np.random.default_rng(12)
        theta = rng.uniform(-math.pi, math.pi, 50)
        vr = profile(5.0, 1.0, theta) + rng.normal(0, 0.1, 50)
        scan = scan_from(vr, theta, sid="det")
        cfg = DprConfig(rng_seed=42)
        m1 = remove_dynamic_points(scan, cfg)
        m2 = remove_dynamic_points(scan, cfg)
        assert m1.labels == m2.labels

    def test_oracle_scan_from_generator(self):
        # End-to-end against the synthetic generator's ground truth.
        from radarplace.scanio import SyntheticWorldConfig, generate_synthetic_sequence
        cfg = SyntheticWorldConfig(num_landmarks=150, world_extent=120.0,
                                   velocity_noise_std=0.03,
                                   dynamic_fraction=0.15, rng_seed=6)
        poses = [Pose2D(0, 0, 0), Pose2D(4.0, 0, 0), Pose2D(8.0, 0, 0)]
        scans, truths = generate_synthetic_sequence(cfg, poses, dt=0.5)
        scan, truth = scans[0], truths[0]
        mask = remove_dynamic_points(scan, DprConfig(rng_seed=1))
        agree = sum(1 for a, b in zip(mask.labels, truth.dynamic_labels)
                    if a == b)
        assert agree / len(mask.labels) > 0.95
