"""Dynamic point removal from Doppler radial velocities.

Static scene points seen from a moving sensor trace a sinusoid over azimuth,
v_r = -v_s * cos(alpha - theta), linearized as v_r = a*cos(theta) + b*sin(theta)
with a = -v_s*cos(alpha), b = -v_s*sin(alpha). Points off that profile are
movers. Two branches:

* static ego: if most radial velocities are (near) zero the sensor is taken as
  stationary and any point with |v_r| >= the static velocity threshold is
  dynamic;
* moving ego: RANSAC over 2-point models of the profile, refined by a least
  squares fit on the consensus set; outliers are dynamic.

Radial velocities are signed, so both thresholds compare |v_r|.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scanio import RadarScan, wrap_angle


class SingularFitError(ValueError):
    """Least-squares profile fit is rank deficient (all azimuths equal mod pi)."""


class DegenerateSceneError(ValueError):
    """RANSAC could not find a model with enough inliers."""


@dataclass
class DprConfig:
    fit_threshold_tau: float = 0.15        # residual tolerance, m/s
    static_velocity_threshold: float = 1.0  # |v_r| below this counts as static
    static_fraction_threshold: float = 0.5  # static-ego branch fires if p > this
    ransac_iterations: int = 100
    ransac_min_inliers: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.fit_threshold_tau <= 0:
            raise ValueError("fit_threshold_tau must be > 0")
        if self.ransac_iterations < 1:
            raise ValueError("ransac_iterations must be >= 1")
        if self.ransac_min_inliers < 2:
            raise ValueError("ransac_min_inliers must be >= 2")
        if not 0.0 < self.static_fraction_threshold < 1.0:
            raise ValueError("static_fraction_threshold must be in (0, 1)")


@dataclass
class EgoMotionEstimate:
    speed: float          # v_s >= 0, m/s
    heading: float        # alpha in (-pi, pi], sensor frame
    inlier_count: int
    residual_rms: float   # over inliers, m/s


@dataclass
class DynamicMask:
    labels: list[int]  # 1 = static, 0 = dynamic; aligned with scan.points
    ego_motion: Optional[EgoMotionEstimate]
    branch: str        # "static_ego" or "moving_ego"
    degenerate: bool = False  # RANSAC fallback fired; all points kept


def fit_velocity_profile(radial_velocities, azimuths) -> tuple[float, float]:
    """Ordinary least squares fit of v_r = a*cos(theta) + b*sin(theta).

    Raises SingularFitError when the normal equations are rank deficient,
    which happens iff all azimuths are equal modulo pi.
    """
    vr = np.asarray(radial_velocities, dtype=float)
    theta = np.asarray(azimuths, dtype=float)
    if vr.shape != theta.shape or vr.ndim != 1:
        raise ValueError("radial_velocities and azimuths must be equal-length 1D")
    if vr.size < 2:
        raise ValueError("need at least 2 points to fit the velocity profile")
    c, s = np.cos(theta), np.sin(theta)
    g11 = float(c @ c)
    g12 = float(c @ s)
    g22 = float(s @ s)
    det = g11 * g22 - g12 * g12
    if det <= 1e-12 * max(g11 * g22, 1e-300):
        raise SingularFitError("all azimuths equal modulo pi; profile fit is singular")
    r1 = float(c @ vr)
    r2 = float(s @ vr)
    a = (g22 * r1 - g12 * r2) / det
    b = (g11 * r2 - g12 * r1) / det
    return a, b


def _model_from_ab(a: float, b: float, residuals: np.ndarray,
                   inliers: np.ndarray) -> EgoMotionEstimate:
    n_in = int(inliers.sum())
    rms = float(np.sqrt(np.mean(residuals[inliers] ** 2))) if n_in else math.inf
    return EgoMotionEstimate(
        speed=math.hypot(a, b),
        heading=wrap_angle(math.atan2(-b, -a)),
        inlier_count=n_in,
        residual_rms=rms,
    )


def ransac_ego_motion(
    radial_velocities,
    azimuths,
    config: DprConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[EgoMotionEstimate, np.ndarray]:
    """RANSAC fit of the sinusoidal velocity profile; returns estimate + inlier mask.

    2-point minimal samples; the best model by inlier count is refined with a
    least squares fit over its inliers and the inlier set re-classified once
    against the refined model.
    """
    vr = np.asarray(radial_velocities, dtype=float)
    theta = np.asarray(azimuths, dtype=float)
    n = vr.size
    if n < config.ransac_min_inliers:
        raise DegenerateSceneError(
            f"{n} points < ransac_min_inliers={config.ransac_min_inliers}")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    tau = config.fit_threshold_tau
    c, s = np.cos(theta), np.sin(theta)

    # All minimal samples at once: solve the 2x2 systems vectorized.
    idx = rng.integers(0, n, size=(config.ransac_iterations, 2))
    i1, i2 = idx[:, 0], idx[:, 1]
    det = c[i1] * s[i2] - s[i1] * c[i2]
    ok = np.abs(det) > 1e-12
    a_h = np.where(ok, (vr[i1] * s[i2] - vr[i2] * s[i1]) / np.where(ok, det, 1.0), 0.0)
    b_h = np.where(ok, (vr[i2] * c[i1] - vr[i1] * c[i2]) / np.where(ok, det, 1.0), 0.0)
    resid = np.abs(vr[None, :] - a_h[:, None] * c[None, :] - b_h[:, None] * s[None, :])
    counts = np.where(ok, (resid < tau).sum(axis=1), -1)
    best = int(np.argmax(counts))
    if counts[best] < config.ransac_min_inliers:
        raise DegenerateSceneError("no RANSAC model reached ransac_min_inliers inliers")

    inliers = resid[best] < tau
    try:
        a, b = fit_velocity_profile(vr[inliers], theta[inliers])
    except SingularFitError:
        a, b = float(a_h[best]), float(b_h[best])
    residuals = np.abs(vr - a * c - b * s)
    inliers = residuals < tau  # single re-classification pass
    if int(inliers.sum()) < config.ransac_min_inliers:
        raise DegenerateSceneError("refined model lost consensus")
    return _model_from_ab(a, b, residuals, inliers), inliers


def scan_rng(config: DprConfig, scan_id: str) -> np.random.Generator:
    """Per-scan RNG so parallel runs over scans stay reproducible."""
    return np.random.default_rng(config.rng_seed ^ zlib.crc32(scan_id.encode("utf-8")))


def remove_dynamic_points(scan: RadarScan, config: DprConfig) -> DynamicMask:
    """Label each point static (1) or dynamic (0).

    p = fraction of points with |v_r| below the static velocity threshold.
    If p > the static-fraction threshold (strict), the sensor is treated as
    stationary and fast points are dynamic; otherwise RANSAC outliers against
    the ego-motion profile are dynamic. Degenerate RANSAC keeps every point
    and sets the `degenerate` flag instead of failing.
    """
    n = len(scan.points)
    if n == 0:
        return DynamicMask(labels=[], ego_motion=None, branch="static_ego")
    _, vr, theta, _ = scan.point_arrays()
    slow = np.abs(vr) < config.static_velocity_threshold
    p = float(slow.sum()) / n
    if p > config.static_fraction_threshold:
        return DynamicMask(
            labels=[1 if s else 0 for s in slow],
            ego_motion=None,
            branch="static_ego",
        )
    try:
        estimate, inliers = ransac_ego_motion(vr, theta, config,
                                              rng=scan_rng(config, scan.scan_id))
    except DegenerateSceneError:
        return DynamicMask(labels=[1] * n, ego_motion=None,
                           branch="moving_ego", degenerate=True)
    return DynamicMask(
        labels=[1 if s else 0 for s in inliers],
        ego_motion=estimate,
        branch="moving_ego",
    )
