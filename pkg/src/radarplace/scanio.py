"""Radar scan data model, JSONL storage, dataset splits and synthetic sequence generation.

A scan is a single radar sweep: 2D points in the sensor frame, each carrying a
signed radial velocity (positive = receding), an azimuth angle and a raw RCS
reflectivity value. Scans are stored one-per-line as JSON (see SCHEMA below).
The synthetic generator produces scans whose static points follow the
sinusoidal radial-velocity profile v_r = -v_s * cos(alpha - theta), which makes
it the ground-truth oracle for the dynamic-point-removal stage.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

SCHEMA = (
    '{"scan_id": str, "timestamp_us": int, '
    '"pose": {"x": float, "y": float, "yaw": float}, '
    '"points": [{"x": float, "y": float, "vr": float, "azimuth": float, "rcs": float}, ...], '
    '"gt_dynamic": [0|1, ...]  (optional)}'
)


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the JSONL scan schema."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SplitError(ValueError):
    """Raised when a valid split cannot be constructed."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.remainder(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class RadarPoint:
    x: float
    y: float
    radial_velocity: float
    azimuth: float
    rcs: float


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass
class RadarScan:
    scan_id: str
    timestamp_us: int
    pose: Pose2D
    points: list[RadarPoint]
    gt_dynamic: Optional[list[int]] = None  # 1 = static, 0 = dynamic (synthetic only)

    def __len__(self) -> int:
        return len(self.points)

    def point_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (xy, radial_velocity, azimuth, rcs) as numpy arrays."""
        n = len(self.points)
        xy = np.empty((n, 2))
        vr = np.empty(n)
        az = np.empty(n)
        rcs = np.empty(n)
        for i, p in enumerate(self.points):
            xy[i, 0] = p.x
            xy[i, 1] = p.y
            vr[i] = p.radial_velocity
            az[i] = p.azimuth
            rcs[i] = p.rcs
        return xy, vr, az, rcs


@dataclass
class DatasetSplit:
    database: list[str]
    training_queries: list[str]
    validation_queries: list[str]
    test_queries: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "database": self.database,
                "training_queries": self.training_queries,
                "validation_queries": self.validation_queries,
                "test_queries": self.test_queries,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        d = json.loads(text)
        return cls(
            database=list(d["database"]),
            training_queries=list(d["training_queries"]),
            validation_queries=list(d["validation_queries"]),
            test_queries=list(d["test_queries"]),
        )


@dataclass
class SyntheticWorldConfig:
    num_landmarks: int = 300
    world_extent: float = 200.0
    landmark_rcs_mean: float = 10.0
    landmark_rcs_std: float = 4.0
    sensor_noise_std: float = 0.0
    velocity_noise_std: float = 0.0
    dynamic_fraction: float = 0.0
    rng_seed: int = 0
    # Probability that a landmark in range actually returns a detection in a
    # given sweep; < 1 makes consecutive scans inconsistent, which is what the
    # temporal encoder is meant to smooth over.
    detection_prob: float = 1.0
    # Optional second RCS population whose prevalence varies with the
    # landmark's angular position: a landmark at angle phi is drawn from the
    # high-RCS mode with probability 0.5 + amplitude * sin(phi). This gives
    # different regions of the world distinct RCS distribution shapes, which
    # min-max normalization preserves (a global shift would not survive it).
    # The harmonic sets how fast the mix varies around the world: probability
    # 0.5 + amplitude * sin(harmonic * phi).
    rcs_bimodal_mean: float = 20.0
    rcs_bimodal_amplitude: float = 0.0
    rcs_bimodal_harmonic: int = 1

    def __post_init__(self):
        if self.sensor_noise_std < 0 or self.velocity_noise_std < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if not 0.0 <= self.dynamic_fraction <= 1.0:
            raise ValueError("dynamic_fraction must be in [0, 1]")
        if not 0.0 < self.detection_prob <= 1.0:
            raise ValueError("detection_prob must be in (0, 1]")
        if not 0.0 <= self.rcs_bimodal_amplitude <= 0.5:
            raise ValueError("rcs_bimodal_amplitude must be in [0, 0.5]")
        if self.rcs_bimodal_harmonic < 1:
            raise ValueError("rcs_bimodal_harmonic must be >= 1")


@dataclass
class ScanTruth:
    """Ground truth attached to one synthetic scan, for oracle use."""
    dynamic_labels: list[int]  # 1 = static, 0 = dynamic
    speed: float               # sensor speed v_s, m/s
    heading: float             # motion direction in the sensor frame, rad


# --------------------------------------------------------------------------
# JSONL load / save
# --------------------------------------------------------------------------

_FLOAT_POINT_KEYS = ("x", "y", "vr", "azimuth", "rcs")


def _require(cond: bool, msg: str, line_no: int):
    if not cond:
        raise DatasetFormatError(msg, line_no)


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _parse_scan(obj: dict, line_no: int) -> RadarScan:
    _require(isinstance(obj, dict), "scan must be a JSON object", line_no)
    for key in ("scan_id", "timestamp_us", "pose", "points"):
        _require(key in obj, f"missing field {key!r}", line_no)
    _require(isinstance(obj["scan_id"], str), "scan_id must be a string", line_no)
    _require(isinstance(obj["timestamp_us"], int), "timestamp_us must be an integer", line_no)
    pose = obj["pose"]
    _require(isinstance(pose, dict), "pose must be an object", line_no)
    for key in ("x", "y", "yaw"):
        _require(key in pose, f"pose missing field {key!r}", line_no)
        _require(_finite(pose[key]), f"pose.{key} must be finite", line_no)
    _require(isinstance(obj["points"], list), "points must be a list", line_no)
    points = []
    for i, p in enumerate(obj["points"]):
        _require(isinstance(p, dict), f"point {i} must be an object", line_no)
        for key in _FLOAT_POINT_KEYS:
            _require(key in p, f"point {i} missing field {key!r}", line_no)
            _require(_finite(p[key]), f"point {i} field {key!r} must be finite", line_no)
        points.append(
            RadarPoint(
                x=float(p["x"]),
                y=float(p["y"]),
                radial_velocity=float(p["vr"]),
                azimuth=float(p["azimuth"]),
                rcs=float(p["rcs"]),
            )
        )
    gt = obj.get("gt_dynamic")
    if gt is not None:
        _require(isinstance(gt, list) and len(gt) == len(points),
                 "gt_dynamic must match the number of points", line_no)
        _require(all(v in (0, 1) for v in gt), "gt_dynamic entries must be 0 or 1", line_no)
        gt = [int(v) for v in gt]
    return RadarScan(
        scan_id=obj["scan_id"],
        timestamp_us=int(obj["timestamp_us"]),
        pose=Pose2D(float(pose["x"]), float(pose["y"]), float(pose["yaw"])),
        points=points,
        gt_dynamic=gt,
    )


def load_dataset(path) -> list[RadarScan]:
    """Load a JSONL scan file; scans are returned sorted by timestamp.

    Malformed lines raise DatasetFormatError carrying the 1-based line number.
    """
    path = Path(path)
    scans: list[RadarScan] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
            scan = _parse_scan(obj, line_no)
            if scan.scan_id in seen_ids:
                raise DatasetFormatError(f"duplicate scan_id {scan.scan_id!r}", line_no)
            seen_ids.add(scan.scan_id)
            scans.append(scan)
    scans.sort(key=lambda s: s.timestamp_us)
    return scans


def save_dataset(scans: Sequence[RadarScan], path) -> None:
    """Write scans as JSONL (one scan per line), in the given order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for scan in scans:
            obj = {
                "scan_id": scan.scan_id,
                "timestamp_us": scan.timestamp_us,
                "pose": {"x": scan.pose.x, "y": scan.pose.y, "yaw": scan.pose.yaw},
                "points": [
                    {"x": p.x, "y": p.y, "vr": p.radial_velocity,
                     "azimuth": p.azimuth, "rcs": p.rcs}
                    for p in scan.points
                ],
            }
            if scan.gt_dynamic is not None:
                obj["gt_dynamic"] = scan.gt_dynamic
            fh.write(json.dumps(obj) + "\n")


# --------------------------------------------------------------------------
# Split construction
# --------------------------------------------------------------------------

def build_splits(
    scans: Sequence[RadarScan],
    min_spacing: float = 1.0,
    val_test_ratio: float = 0.2,
    positive_radius: float = 9.0,
    day_boundary: int = 0,
) -> DatasetSplit:
    """Partition scans into database / training / validation / test sets.

    Scans at or before `day_boundary` (timestamp_us) form the training side:
    the database is built by a greedy spatial pass in timestamp order that
    accepts a scan iff it lies more than `min_spacing` from every previously
    accepted scan; the remainder become training queries. Scans after the
    boundary are split validation:test by `val_test_ratio` (fraction assigned
    to validation, taken as every round(1/ratio)-th query), after dropping
    queries with no database entry within `positive_radius`.
    """
    if not scans:
        raise SplitError("cannot build splits from an empty scan list")
    if min_spacing <= 0:
        raise SplitError("min_spacing must be > 0")
    if not 0.0 < val_test_ratio < 1.0:
        raise SplitError("val_test_ratio must be in (0, 1)")

    train_side = [s for s in scans if s.timestamp_us <= day_boundary]
    query_side = [s for s in scans if s.timestamp_us > day_boundary]
    if not train_side:
        raise SplitError("all scans fall after day_boundary; training set would be empty")

    database: list[str] = []
    db_xy: list[tuple[float, float]] = []
    training: list[str] = []
    for scan in sorted(train_side, key=lambda s: s.timestamp_us):
        x, y = scan.pose.x, scan.pose.y
        if all(math.hypot(x - dx, y - dy) > min_spacing for dx, dy in db_xy):
            database.append(scan.scan_id)
            db_xy.append((x, y))
        else:
            training.append(scan.scan_id)

    # Keep only queries that have at least one true positive in the database.
    db_arr = np.array(db_xy)
    kept: list[str] = []
    for scan in sorted(query_side, key=lambda s: s.timestamp_us):
        d = np.hypot(db_arr[:, 0] - scan.pose.x, db_arr[:, 1] - scan.pose.y)
        if float(d.min()) <= positive_radius:
            kept.append(scan.scan_id)

    stride = max(2, int(round(1.0 / val_test_ratio)))
    validation = [sid for i, sid in enumerate(kept) if i % stride == 0]
    test = [sid for i, sid in enumerate(kept) if i % stride != 0]

    return DatasetSplit(
        database=database,
        training_queries=training,
        validation_queries=validation,
        test_queries=test,
    )


# --------------------------------------------------------------------------
# Synthetic world
# --------------------------------------------------------------------------

def loop_trajectory(num_poses: int, loop_length: float, start_timestamp_us: int = 0,
                    dt: float = 0.5) -> tuple[list[Pose2D], list[int]]:
    """Circular loop of the given perimeter, yaw tangent to the circle.

    Returns poses and matching timestamps (microseconds, spaced by dt).
    """
    radius = loop_length / TWO_PI
    poses = []
    stamps = []
    for i in range(num_poses):
        phi = TWO_PI * i / num_poses
        poses.append(Pose2D(radius * math.cos(phi), radius * math.sin(phi),
                            wrap_angle(phi + math.pi / 2)))
        stamps.append(start_timestamp_us + int(round(i * dt * 1e6)))
    return poses, stamps


def _ego_velocity(trajectory: Sequence[Pose2D], i: int, dt: float) -> tuple[float, float]:
    """World-frame velocity (vx, vy) at pose i from a forward difference."""
    n = len(trajectory)
    if n < 2:
        return 0.0, 0.0
    j = i if i < n - 1 else i - 1
    a, b = trajectory[j], trajectory[j + 1]
    return (b.x - a.x) / dt, (b.y - a.y) / dt


def generate_synthetic_sequence(
    config: SyntheticWorldConfig,
    trajectory: Sequence[Pose2D],
    dynamic_actors: Sequence[tuple[Pose2D, tuple[float, float]]] = (),
    timestamps_us: Optional[Sequence[int]] = None,
    dt: float = 0.5,
    sensor_range: float = 100.0,
    scan_id_prefix: str = "scan",
) -> tuple[list[RadarScan], list[ScanTruth]]:
    """Simulate a radar sequence over a fixed landmark world.

    Static landmark returns get radial velocities from the sinusoidal
    ego-motion profile v_r = -v_s*cos(alpha - theta) evaluated at the (noisy)
    observed azimuth, plus Gaussian noise of velocity_noise_std. Dynamic
    actors move at constant world velocity and contribute returns whose
    radial velocity is the relative velocity projected on the line of sight.
    A further `dynamic_fraction` of each scan's points are spurious movers at
    random in-range positions with random velocities.

    Returns the scans (with gt_dynamic filled in) and per-scan ground truth.
    """
    if not trajectory:
        raise ValueError("trajectory must be non-empty")
    rng = np.random.default_rng(config.rng_seed)
    half = config.world_extent / 2.0
    landmarks = rng.uniform(-half, half, size=(config.num_landmarks, 2))
    landmark_rcs = rng.normal(config.landmark_rcs_mean, config.landmark_rcs_std,
                              size=config.num_landmarks)
    if config.rcs_bimodal_amplitude > 0:
        angles = np.arctan2(landmarks[:, 1], landmarks[:, 0])
        p_high = np.clip(
            0.5 + config.rcs_bimodal_amplitude
            * np.sin(config.rcs_bimodal_harmonic * angles), 0.0, 1.0)
        high = rng.random(config.num_landmarks) < p_high
        landmark_rcs[high] = rng.normal(config.rcs_bimodal_mean,
                                        config.landmark_rcs_std,
                                        size=int(high.sum()))

    scans: list[RadarScan] = []
    truths: list[ScanTruth] = []
    for i, pose in enumerate(trajectory):
        t = i * dt
        vx, vy = _ego_velocity(trajectory, i, dt)
        v_s = math.hypot(vx, vy)
        # Motion direction expressed in the sensor frame.
        alpha = wrap_angle(math.atan2(vy, vx) - pose.yaw) if v_s > 0 else 0.0
        cos_yaw, sin_yaw = math.cos(pose.yaw), math.sin(pose.yaw)

        points: list[RadarPoint] = []
        labels: list[int] = []

        def observe(wx: float, wy: float) -> tuple[float, float, float]:
            """World position -> noisy sensor-frame (x, y, azimuth)."""
            dx, dy = wx - pose.x, wy - pose.y
            sx = cos_yaw * dx + sin_yaw * dy
            sy = -sin_yaw * dx + cos_yaw * dy
            if config.sensor_noise_std > 0:
                sx += rng.normal(0.0, config.sensor_noise_std)
                sy += rng.normal(0.0, config.sensor_noise_std)
            return sx, sy, math.atan2(sy, sx)

        for li in range(config.num_landmarks):
            wx, wy = landmarks[li]
            if math.hypot(wx - pose.x, wy - pose.y) > sensor_range:
                continue
            if config.detection_prob < 1.0 and rng.random() >= config.detection_prob:
                continue
            sx, sy, theta = observe(wx, wy)
            vr = -v_s * math.cos(alpha - theta)
            if config.velocity_noise_std > 0:
                vr += rng.normal(0.0, config.velocity_noise_std)
            points.append(RadarPoint(sx, sy, vr, theta, float(landmark_rcs[li])))
            labels.append(1)

        n_static = len(labels)

        for actor_pose, (avx, avy) in dynamic_actors:
            ax = actor_pose.x + avx * t
            ay = actor_pose.y + avy * t
            if math.hypot(ax - pose.x, ay - pose.y) > sensor_range:
                continue
            sx, sy, theta = observe(ax, ay)
            # Relative velocity in the sensor frame, projected on line of sight.
            rvx = cos_yaw * (avx - vx) + sin_yaw * (avy - vy)
            rvy = -sin_yaw * (avx - vx) + cos_yaw * (avy - vy)
            vr = rvx * math.cos(theta) + rvy * math.sin(theta)
            if config.velocity_noise_std > 0:
                vr += rng.normal(0.0, config.velocity_noise_std)
            rcs = float(rng.normal(config.landmark_rcs_mean, config.landmark_rcs_std))
            points.append(RadarPoint(sx, sy, vr, theta, rcs))
            labels.append(0)

        if config.dynamic_fraction > 0 and n_static > 0 and config.dynamic_fraction < 1:
            n_spurious = int(round(n_static * config.dynamic_fraction
                                   / (1.0 - config.dynamic_fraction)))
            for _ in range(n_spurious):
                r = sensor_range * math.sqrt(rng.uniform(0.04, 1.0))
                phi = rng.uniform(-math.pi, math.pi)
                wx = pose.x + r * math.cos(phi)
                wy = pose.y + r * math.sin(phi)
                speed = rng.uniform(3.0, 15.0)
                direction = rng.uniform(-math.pi, math.pi)
                avx, avy = speed * math.cos(direction), speed * math.sin(direction)
                sx, sy, theta = observe(wx, wy)
                rvx = cos_yaw * (avx - vx) + sin_yaw * (avy - vy)
                rvy = -sin_yaw * (avx - vx) + cos_yaw * (avy - vy)
                vr = rvx * math.cos(theta) + rvy * math.sin(theta)
                if config.velocity_noise_std > 0:
                    vr += rng.normal(0.0, config.velocity_noise_std)
                rcs = float(rng.normal(config.landmark_rcs_mean, config.landmark_rcs_std))
                points.append(RadarPoint(sx, sy, vr, theta, rcs))
                labels.append(0)

        if timestamps_us is not None:
            stamp = int(timestamps_us[i])
        else:
            stamp = int(round(t * 1e6))
        scans.append(RadarScan(
            scan_id=f"{scan_id_prefix}-{i:06d}",
            timestamp_us=stamp,
            pose=pose,
            points=points,
            gt_dynamic=list(labels),
        ))
        truths.append(ScanTruth(dynamic_labels=list(labels), speed=v_s, heading=alpha))

    return scans, truths
