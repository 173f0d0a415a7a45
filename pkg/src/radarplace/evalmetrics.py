"""Retrieval metrics: recall@N, precision-recall curve, maxF1, average precision.

A query counts as correct at N when any of its top-N candidates lies within
`positive_radius` of the query pose. The PR curve sweeps an acceptance
threshold over the top-1 distance: a query is accepted iff its top-1 distance
is <= the threshold; TP = accepted and correct, FP = accepted and wrong,
precision defaults to 1 when nothing is accepted, recall = TP / total queries.
AP is the trapezoidal area under the curve over recall.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class EvalConfig:
    positive_radius: float = 9.0
    recall_ns: tuple[int, ...] = (1, 5, 10)
    pr_thresholds: int = 1000

    def __post_init__(self):
        if self.positive_radius <= 0:
            raise ValueError("positive_radius must be > 0")
        if list(self.recall_ns) != sorted(self.recall_ns):
            raise ValueError("recall_ns must be sorted ascending")
        if self.pr_thresholds < 2:
            raise ValueError("pr_thresholds must be >= 2")


@dataclass
class QueryResult:
    """Ranked retrieval output for one query, ready for scoring.

    `candidate_correct[i]` says whether the i-th ranked candidate lies within
    positive_radius of the query; `distances` are the final-stage distances
    the ranking was produced with.
    """
    query_id: str
    candidate_ids: list[str]
    candidate_correct: list[bool]
    distances: list[float]


@dataclass
class EvalReport:
    recall_at_n: dict[int, float]
    pr_curve: list[tuple[float, float, float]]  # (threshold, precision, recall)
    max_f1: float
    average_precision: float
    per_query_records: list[dict]
    score_name: str = "d_total"

    def to_json(self) -> str:
        return json.dumps(
            {
                "score_name": self.score_name,
                "recall_at_n": {str(k): v for k, v in sorted(self.recall_at_n.items())},
                "max_f1": self.max_f1,
                "average_precision": self.average_precision,
                "pr_curve": [[t, p, r] for t, p, r in self.pr_curve],
                "per_query_records": self.per_query_records,
            },
            sort_keys=True,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def save_pr_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "precision", "recall"])
            for t, p, r in self.pr_curve:
                writer.writerow([f"{t:.9g}", f"{p:.9g}", f"{r:.9g}"])


def recall_at_n(results: Sequence[QueryResult], config: EvalConfig) -> dict[int, float]:
    """Fraction of queries with a true positive among the top-N, per N."""
    if not results:
        raise ValueError("no query results to score")
    out = {}
    total = len(results)
    for n in config.recall_ns:
        hits = sum(1 for r in results if any(r.candidate_correct[:n]))
        out[n] = hits / total
    return out


def pr_curve(results: Sequence[QueryResult], config: EvalConfig
             ) -> list[tuple[float, float, float]]:
    """Threshold sweep over observed top-1 distances."""
    if not results:
        raise ValueError("no query results to score")
    top1_d = np.array([r.distances[0] for r in results])
    top1_ok = np.array([bool(r.candidate_correct[0]) for r in results])
    total = len(results)
    thresholds = np.linspace(float(top1_d.min()), float(top1_d.max()),
                             config.pr_thresholds)
    curve = []
    for t in thresholds:
        accepted = top1_d <= t
        tp = int((accepted & top1_ok).sum())
        fp = int((accepted & ~top1_ok).sum())
        precision = tp / (tp + fp) if (tp + fp) else 1.0
        recall = tp / total
        curve.append((float(t), precision, recall))
    return curve


def max_f1(curve: Sequence[tuple[float, float, float]]) -> float:
    if not curve:
        raise ValueError("empty precision-recall curve")
    best = 0.0
    for _, p, r in curve:
        if p + r > 0:
            best = max(best, 2.0 * p * r / (p + r))
    return best


def average_precision(curve: Sequence[tuple[float, float, float]]) -> float:
    """Trapezoidal area under precision over recall, points sorted by recall."""
    if not curve:
        raise ValueError("empty precision-recall curve")
    pts = sorted((r, p) for _, p, r in curve)
    area = 0.0
    for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def evaluate(results: Sequence[QueryResult], config: EvalConfig,
             score_name: str = "d_total") -> EvalReport:
    curve = pr_curve(results, config)
    records = [
        {
            "query_id": r.query_id,
            "top1_id": r.candidate_ids[0],
            "top1_distance": r.distances[0],
            "is_correct": bool(r.candidate_correct[0]),
        }
        for r in results
    ]
    return EvalReport(
        recall_at_n=recall_at_n(results, config),
        pr_curve=curve,
        max_f1=max_f1(curve),
        average_precision=average_precision(curve),
        per_query_records=records,
        score_name=score_name,
    )


def mark_correct(candidate_poses: Sequence[tuple[float, float]],
                 query_pose: tuple[float, float], radius: float) -> list[bool]:
    """Geometric correctness labels for a ranked candidate list."""
    qx, qy = query_pose
    return [math.hypot(x - qx, y - qy) <= radius for x, y in candidate_poses]
