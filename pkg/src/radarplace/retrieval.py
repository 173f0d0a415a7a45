"""Descriptor index, RCS histograms, KL re-ranking and fused-distance retrieval.

Retrieval runs in two stages: exact Euclidean top-M over the whole index on
descriptor distance d_E, then a re-rank of that shortlist by

    d_total = alpha * d_R(query_hist, candidate_hist) + (1 - alpha) * d_E

where d_R is the (asymmetric) KL divergence between epsilon-smoothed RCS
histograms, with the query always the first argument.

Histogram construction: per-scan min-max normalization to [0, 1], values <=
the lower bound b_m discarded, counts over K = ceil((1 - b_m) / b_w) bins
covering (b_m, 1] (the last bin clipped at 1.0), epsilon added to every bin,
then normalized to unit sum.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .scanio import Pose2D


@dataclass
class RcsConfig:
    lower_bound_bm: float = 0.02
    bin_width_bw: float = 0.04
    fusion_alpha: float = 0.41
    top_m: int = 100
    smoothing_epsilon: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.lower_bound_bm < 1.0:
            raise ValueError("lower_bound_bm must be in [0, 1)")
        if not 0.0 < self.bin_width_bw <= 1.0 - self.lower_bound_bm:
            raise ValueError("bin_width_bw must be in (0, 1 - lower_bound_bm]")
        if self.top_m < 1:
            raise ValueError("top_m must be >= 1")
        if not 0.0 <= self.fusion_alpha <= 1.0:
            raise ValueError("fusion_alpha must be in [0, 1]")

    @property
    def num_bins(self) -> int:
        return int(math.ceil((1.0 - self.lower_bound_bm) / self.bin_width_bw))


@dataclass
class RcsHistogram:
    bins: np.ndarray      # probability vector, unit sum after smoothing
    degenerate: bool = False  # all input values identical; bins are uniform


def compute_rcs_histogram(rcs_values, config: RcsConfig) -> RcsHistogram:
    """Smoothed, normalized RCS histogram of one (aggregated) scan.

    Values are min-max normalized per scan, so any positive affine rescaling
    of the raw RCS leaves the histogram unchanged. A scan whose values are all
    identical has no usable spread; it yields a uniform histogram flagged
    degenerate.
    """
    values = np.asarray(rcs_values, dtype=float)
    k = config.num_bins
    if values.size < 2 or float(values.max()) == float(values.min()):
        bins = np.full(k, 1.0 / k)
        return RcsHistogram(bins=bins, degenerate=True)
    lo, hi = float(values.min()), float(values.max())
    norm = (values - lo) / (hi - lo)
    kept = norm[norm > config.lower_bound_bm]
    counts = np.zeros(k, dtype=float)
    if kept.size:
        idx = np.floor((kept - config.lower_bound_bm) / config.bin_width_bw)
        idx = np.minimum(idx.astype(np.int64), k - 1)  # 1.0 lands in the last bin
        np.add.at(counts, idx, 1.0)
    counts += config.smoothing_epsilon
    return RcsHistogram(bins=counts / counts.sum())


def histogram_distance(h1: RcsHistogram, h2: RcsHistogram) -> float:
    """KL divergence sum(h1 * log(h1 / h2)). Asymmetric in its arguments."""
    a, b = h1.bins, h2.bins
    if a.shape != b.shape:
        raise ValueError(f"bin count mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * np.log(a / b)))


@dataclass
class IndexEntry:
    scan_id: str
    pose: Pose2D
    descriptor: np.ndarray
    histogram: RcsHistogram


@dataclass
class PlaceIndex:
    entries: list[IndexEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def descriptor_matrix(self) -> np.ndarray:
        return np.stack([e.descriptor for e in self.entries])


@dataclass
class RankedCandidate:
    scan_id: str
    feature_distance: float
    histogram_distance: float
    total_distance: float


def query_index(
    index: PlaceIndex,
    query_descriptor: np.ndarray,
    query_histogram: RcsHistogram,
    config: RcsConfig,
) -> list[RankedCandidate]:
    """Two-stage retrieval: Euclidean top-M, then fused-distance re-rank.

    Ties at both stages are broken by scan_id order. The re-ranked output is
    always a permutation of the stage-1 shortlist.
    """
    if not index.entries:
        raise ValueError("cannot query an empty index")
    descs = index.descriptor_matrix()
    d_e = np.linalg.norm(descs - np.asarray(query_descriptor), axis=1)
    order = sorted(range(len(index)),
                   key=lambda i: (d_e[i], index.entries[i].scan_id))
    shortlist = order[: config.top_m]

    alpha = config.fusion_alpha
    candidates = []
    for i in shortlist:
        entry = index.entries[i]
        d_r = histogram_distance(query_histogram, entry.histogram)
        candidates.append(RankedCandidate(
            scan_id=entry.scan_id,
            feature_distance=float(d_e[i]),
            histogram_distance=d_r,
            total_distance=alpha * d_r + (1.0 - alpha) * float(d_e[i]),
        ))
    candidates.sort(key=lambda c: (c.total_distance, c.scan_id))
    return candidates


# --------------------------------------------------------------------------
# Index file: JSON header + little-endian binary payload, magic "API1"
# --------------------------------------------------------------------------

INDEX_MAGIC = b"API1"


def save_index(index: PlaceIndex, path, configs: dict | None = None) -> None:
    path = Path(path)
    if index.entries:
        ddim = int(index.entries[0].descriptor.shape[0])
        kbins = int(index.entries[0].histogram.bins.shape[0])
    else:
        ddim = kbins = 0
    header = {
        "version": 1,
        "num_entries": len(index.entries),
        "descriptor_dim": ddim,
        "num_bins": kbins,
        "configs": configs or {},
        "entries": [
            {"scan_id": e.scan_id,
             "pose": {"x": e.pose.x, "y": e.pose.y, "yaw": e.pose.yaw},
             "degenerate_histogram": e.histogram.degenerate}
            for e in index.entries
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for e in index.entries:
            fh.write(e.descriptor.astype("<f4").tobytes())
        for e in index.entries:
            fh.write(e.histogram.bins.astype("<f8").tobytes())


def load_index(path) -> PlaceIndex:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != INDEX_MAGIC:
            raise ValueError(f"{path}: bad index magic")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        n = header["num_entries"]
        ddim = header["descriptor_dim"]
        kbins = header["num_bins"]
        descs = np.frombuffer(fh.read(4 * n * ddim), dtype="<f4").reshape(n, ddim)
        hists = np.frombuffer(fh.read(8 * n * kbins), dtype="<f8").reshape(n, kbins)
    entries = []
    for i, meta in enumerate(header["entries"]):
        pose = meta["pose"]
        entries.append(IndexEntry(
            scan_id=meta["scan_id"],
            pose=Pose2D(pose["x"], pose["y"], pose["yaw"]),
            descriptor=descs[i].astype(np.float64),
            histogram=RcsHistogram(bins=hists[i].copy(),
                                   degenerate=meta["degenerate_histogram"]),
        ))
    return PlaceIndex(entries=entries)


def build_index(
    scan_ids: Sequence[str],
    poses: dict[str, Pose2D],
    descriptors: dict[str, np.ndarray],
    rcs_values: dict[str, np.ndarray],
    config: RcsConfig,
) -> PlaceIndex:
    """Assemble an index from per-scan descriptors and aggregated RCS values.

    Scans missing a descriptor or RCS payload are skipped and reported via
    the returned index's entry count (the caller logs them).
    """
    entries = []
    for sid in scan_ids:
        if sid not in descriptors or sid not in rcs_values:
            continue
        entries.append(IndexEntry(
            scan_id=sid,
            pose=poses[sid],
            descriptor=np.asarray(descriptors[sid], dtype=float),
            histogram=compute_rcs_histogram(rcs_values[sid], config),
        ))
    return PlaceIndex(entries=entries)
