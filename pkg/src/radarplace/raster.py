"""Scan aggregation and bird's-eye-view rasterization.

Neighbor scans are re-expressed in the center scan's frame using ground-truth
poses, dynamic points are dropped, and the merged cloud is projected onto a
binary square occupancy image. Pixel convention (R = crop_range, S =
image_size): a surviving point (x, y) maps to

    col = floor((x + R) / (2R) * S),  row = floor((R - y) / (2R) * S)

clamped to [0, S-1]; points with max(|x|, |y|) >= R are discarded first.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dpr import DynamicMask
from .scanio import Pose2D, RadarScan


@dataclass
class RasterConfig:
    num_aggregated_scans: int = 7
    crop_range: float = 100.0
    image_size: int = 200
    apply_dpr: bool = True

    def __post_init__(self):
        if self.image_size % 2 != 0:
            raise ValueError("image_size must be even")
        if self.crop_range <= 0:
            raise ValueError("crop_range must be > 0")
        if self.num_aggregated_scans < 1 or self.num_aggregated_scans % 2 == 0:
            raise ValueError("num_aggregated_scans must be odd and >= 1")


@dataclass
class AggregatedScan:
    xy: np.ndarray                 # (N, 2), center-scan frame
    rcs_values: np.ndarray         # (N,), aligned with xy
    source_scan_ids: list[str]
    center_scan_id: str
    center_pose: Pose2D
    boundary_clamped: bool = False


@dataclass
class RadarImage:
    grid: np.ndarray               # (S, S) uint8, values in {0, 1}
    center_pose: Pose2D
    scan_id: str


def window_indices(num_scans: int, center: int, width: int) -> tuple[list[int], bool]:
    """Centered window of `width` indices around `center`, edge-clamped.

    Returns (indices, clamped) where clamped is True when the window ran off
    either end of the sequence and had to repeat boundary scans.
    """
    half = width // 2
    raw = range(center - half, center + half + 1)
    idx = [min(max(i, 0), num_scans - 1) for i in raw]
    return idx, idx != list(raw)


def aggregate_scans(
    scans: Sequence[RadarScan],
    center_index: int,
    masks: Optional[Sequence[Optional[DynamicMask]]] = None,
    boundary_clamped: bool = False,
) -> AggregatedScan:
    """Merge a window of scans into the center scan's sensor frame.

    `masks`, when given, is aligned with `scans`; points labeled dynamic (0)
    are dropped before concatenation. RCS values stay aligned with the points.
    """
    if masks is not None and len(masks) != len(scans):
        raise ValueError("masks must align with scans")
    center = scans[center_index]
    cx, cy, cyaw = center.pose.x, center.pose.y, center.pose.yaw
    cos_c, sin_c = math.cos(cyaw), math.sin(cyaw)

    xs: list[np.ndarray] = []
    rs: list[np.ndarray] = []
    sources: list[str] = []
    for k, scan in enumerate(scans):
        xy, _, _, rcs = scan.point_arrays()
        if masks is not None and masks[k] is not None:
            keep = np.array(masks[k].labels, dtype=bool)
            if keep.size != xy.shape[0]:
                raise ValueError(f"mask length mismatch for scan {scan.scan_id!r}")
            xy, rcs = xy[keep], rcs[keep]
        if xy.shape[0]:
            # sensor -> world -> center frame
            yaw = scan.pose.yaw
            cos_s, sin_s = math.cos(yaw), math.sin(yaw)
            wx = cos_s * xy[:, 0] - sin_s * xy[:, 1] + scan.pose.x
            wy = sin_s * xy[:, 0] + cos_s * xy[:, 1] + scan.pose.y
            dx, dy = wx - cx, wy - cy
            out = np.column_stack((cos_c * dx + sin_c * dy, -sin_c * dx + cos_c * dy))
            xs.append(out)
            rs.append(rcs)
        sources.append(scan.scan_id)

    xy_all = np.vstack(xs) if xs else np.empty((0, 2))
    rcs_all = np.concatenate(rs) if rs else np.empty(0)
    return AggregatedScan(
        xy=xy_all,
        rcs_values=rcs_all,
        source_scan_ids=sources,
        center_scan_id=center.scan_id,
        center_pose=center.pose,
        boundary_clamped=boundary_clamped,
    )


def rasterize(agg: AggregatedScan, config: RasterConfig) -> RadarImage:
    """Project an aggregated cloud to a binary occupancy grid."""
    r = config.crop_range
    size = config.image_size
    grid = np.zeros((size, size), dtype=np.uint8)
    xy = agg.xy
    if xy.shape[0]:
        keep = np.maximum(np.abs(xy[:, 0]), np.abs(xy[:, 1])) < r
        xy = xy[keep]
    if xy.shape[0]:
        col = np.floor((xy[:, 0] + r) / (2 * r) * size).astype(np.int64)
        row = np.floor((r - xy[:, 1]) / (2 * r) * size).astype(np.int64)
        np.clip(col, 0, size - 1, out=col)
        np.clip(row, 0, size - 1, out=row)
        grid[row, col] = 1
    return RadarImage(grid=grid, center_pose=agg.center_pose, scan_id=agg.center_scan_id)


# --------------------------------------------------------------------------
# PGM serialization (P5, maxval 1) with a JSON sidecar
# --------------------------------------------------------------------------

def save_image(image: RadarImage, path) -> None:
    path = Path(path)
    size = image.grid.shape[0]
    with path.open("wb") as fh:
        fh.write(f"P5\n{size} {size}\n1\n".encode("ascii"))
        fh.write(image.grid.astype(np.uint8).tobytes())
    sidecar = {
        "scan_id": image.scan_id,
        "center_pose": {"x": image.center_pose.x, "y": image.center_pose.y,
                        "yaw": image.center_pose.yaw},
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True))


def load_image(path) -> RadarImage:
    path = Path(path)
    data = path.read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a P5 PGM file")
    w, h = (int(v) for v in parts[1].split())
    if parts[2] != b"1":
        raise ValueError(f"{path}: expected maxval 1")
    grid = np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w).copy()
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    pose = sidecar["center_pose"]
    return RadarImage(
        grid=grid,
        center_pose=Pose2D(pose["x"], pose["y"], pose["yaw"]),
        scan_id=sidecar["scan_id"],
    )
