"""Retrieval metrics against hand-computed values and counting oracles."""
import json
import math

import numpy as np
import pytest

from radarplace.evalmetrics import (EvalConfig, EvalReport, QueryResult,
                                    average_precision, evaluate, mark_correct,
                                    max_f1, pr_curve, recall_at_n)


def result(qid, correct, distances=None):
    correct = list(correct)
    if distances is None:
        distances = [0.1 * (i + 1) for i in range(len(correct))]
    return QueryResult(query_id=qid,
                       candidate_ids=[f"{qid}-c{i}" for i in range(len(correct))],
                       candidate_correct=correct,
                       distances=list(distances))


def random_results(n, seed, depth=10):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        correct = list(rng.random(depth) < 0.3)
        d = np.sort(rng.random(depth))
        out.append(result(f"q{i}", correct, list(d)))
    return out


class TestRecallAtN:
    def test_all_correct_at_one(self):
        results = [result(f"q{i}", [True] + [False] * 4) for i in range(10)]
        got = recall_at_n(results, EvalConfig())
        assert got == {1: 1.0, 5: 1.0, 10: 1.0}

    def test_hand_counted_mixture(self):
        results = [
            result("a", [True, False, False, False, False]),
            result("b", [False, True, False, False, False]),
            result("c", [False, False, False, False, True]),
            result("d", [False, False, False, False, False]),
        ]
        got = recall_at_n(results, EvalConfig(recall_ns=(1, 2, 5)))
        assert got[1] == pytest.approx(0.25)
        assert got[2] == pytest.approx(0.5)
        assert got[5] == pytest.approx(0.75)

    def test_monotone_in_n(self):
        results = random_results(50, seed=0)
        got = recall_at_n(results, EvalConfig(recall_ns=(1, 2, 3, 5, 10)))
        vals = [got[n] for n in (1, 2, 3, 5, 10)]
        assert vals == sorted(vals)

    def test_matches_counting_oracle(self):
        results = random_results(80, seed=1)
        cfg = EvalConfig(recall_ns=(1, 3, 7))
        got = recall_at_n(results, cfg)
        for n in cfg.recall_ns:
            hits = 0
            for r in results:
                found = False
                for i in range(min(n, len(r.candidate_correct))):
                    if r.candidate_correct[i]:
                        found = True
                hits += found
            assert got[n] == pytest.approx(hits / 80)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            recall_at_n([], EvalConfig())


class TestPrCurve:
    def test_perfect_separation(self):
        # Correct queries at small distances, wrong ones far away.
        results = [result(f"g{i}", [True], [0.1]) for i in range(5)]
        results += [result(f"b{i}", [False], [0.9]) for i in range(5)]
        curve = pr_curve(results, EvalConfig(pr_thresholds=100))
        # Some threshold accepts all 5 correct and none wrong.
        assert any(p == 1.0 and r == pytest.approx(0.5) for _, p, r in curve)
        assert max_f1(curve) >= 2 * 1.0 * 0.5 / 1.5

    def test_counts_match_brute_force(self):
        results = random_results(60, seed=2)
        cfg = EvalConfig(pr_thresholds=50)
        curve = pr_curve(results, cfg)
        assert len(curve) == 50
        for t, p, r in curve:
            tp = sum(1 for q in results
                     if q.distances[0] <= t and q.candidate_correct[0])
            fp = sum(1 for q in results
                     if q.distances[0] <= t and not q.candidate_correct[0])
            expected_p = tp / (tp + fp) if tp + fp else 1.0
            assert p == pytest.approx(expected_p, abs=1e-12)
            assert r == pytest.approx(tp / 60, abs=1e-12)

    def test_recall_non_decreasing_in_threshold(self):
        curve = pr_curve(random_results(40, seed=3), EvalConfig())
        recalls = [r for _, _, r in curve]
        assert recalls == sorted(recalls)

    def test_final_threshold_accepts_everything(self):
        results = random_results(30, seed=4)
        curve = pr_curve(results, EvalConfig())
        _, p_last, r_last = curve[-1]
        frac_correct = sum(q.candidate_correct[0] for q in results) / 30
        assert r_last == pytest.approx(frac_correct)
        assert p_last == pytest.approx(frac_correct)

    def test_no_acceptance_precision_one(self):
        # All distances equal: the lowest threshold already accepts everything,
        # so build a curve by hand to pin the empty-acceptance convention.
        results = [result("a", [True], [0.5]), result("b", [False], [1.5])]
        curve = pr_curve(results, EvalConfig(pr_thresholds=2))
        t0, p0, r0 = curve[0]
        assert t0 == pytest.approx(0.5)
        assert p0 == 1.0 and r0 == pytest.approx(0.5)


class TestScalarMetrics:
    def test_max_f1_hand_value(self):
        curve = [(0.0, 1.0, 0.2), (0.5, 0.8, 0.6), (1.0, 0.5, 1.0)]
        expected = max(2 * p * r / (p + r) for _, p, r in curve)
        assert max_f1(curve) == pytest.approx(expected)
        assert max_f1(curve) == pytest.approx(2 * 0.8 * 0.6 / 1.4)

    def test_max_f1_all_zero(self):
        assert max_f1([(0.0, 0.0, 0.0)]) == 0.0

    def test_average_precision_rectangle(self):
        # Constant precision 0.8 over recall [0, 1] integrates to 0.8.
        curve = [(t, 0.8, t) for t in np.linspace(0, 1, 11)]
        assert average_precision(curve) == pytest.approx(0.8, abs=1e-12)

    def test_average_precision_triangle(self):
        # Precision falls linearly 1 -> 0 over recall 0 -> 1: area 1/2.
        curve = [(t, 1.0 - t, t) for t in np.linspace(0, 1, 101)]
        assert average_precision(curve) == pytest.approx(0.5, abs=1e-12)

    def test_average_precision_matches_numpy_trapezoid(self):
        curve = pr_curve(random_results(50, seed=5), EvalConfig())
        pts = sorted((r, p) for _, p, r in curve)
        rs = [r for r, _ in pts]
        ps = [p for _, p in pts]
        assert average_precision(curve) == pytest.approx(
            float(np.trapezoid(ps, rs)), abs=1e-12)

    def test_empty_curve_rejected(self):
        with pytest.raises(ValueError):
            max_f1([])
        with pytest.raises(ValueError):
            average_precision([])


class TestEvaluate:
    def test_report_fields_consistent(self):
        results = random_results(25, seed=6)
        cfg = EvalConfig()
        report = evaluate(results, cfg, score_name="d_E")
        assert report.score_name == "d_E"
        assert report.recall_at_n == recall_at_n(results, cfg)
        assert report.max_f1 == pytest.approx(max_f1(report.pr_curve))
        assert len(report.per_query_records) == 25
        rec = report.per_query_records[0]
        assert set(rec) == {"query_id", "top1_id", "top1_distance", "is_correct"}

    def test_json_round_trip(self, tmp_path):
        report = evaluate(random_results(10, seed=7), EvalConfig())
        path = tmp_path / "report.json"
        report.save(path)
        data = json.loads(path.read_text())
        assert data["max_f1"] == pytest.approx(report.max_f1)
        assert data["recall_at_n"]["1"] == pytest.approx(report.recall_at_n[1])
        assert len(data["pr_curve"]) == len(report.pr_curve)

    def test_json_deterministic(self):
        results = random_results(10, seed=8)
        a = evaluate(results, EvalConfig()).to_json()
        b = evaluate(results, EvalConfig()).to_json()
        assert a == b

    def test_pr_csv(self, tmp_path):
        report = evaluate(random_results(10, seed=9), EvalConfig(pr_thresholds=5))
        path = tmp_path / "pr.csv"
        report.save_pr_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "threshold,precision,recall"
        assert len(lines) == 6


class TestMarkCorrect:
    def test_radius_boundary_inclusive(self):
        got = mark_correct([(9.0, 0.0), (9.0001, 0.0), (0.0, -8.9)],
                           (0.0, 0.0), 9.0)
        assert got == [True, False, True]

    def test_matches_hypot_oracle(self):
        rng = np.random.default_rng(10)
        cands = [tuple(p) for p in rng.uniform(-30, 30, (50, 2))]
        q = (3.0, -4.0)
        got = mark_correct(cands, q, 15.0)
        expected = [math.sqrt((x - 3.0) ** 2 + (y + 4.0) ** 2) <= 15.0
                    for x, y in cands]
        assert got == expected

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EvalConfig(positive_radius=0.0)
        with pytest.raises(ValueError):
            EvalConfig(recall_ns=(5, 1))
        with pytest.raises(ValueError):
            EvalConfig(pr_thresholds=1)
