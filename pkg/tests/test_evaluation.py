"""Metrics vs brute-force oracles, experiments, and report emission."""
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasanet.evaluation import (
    ExperimentError,
    MetricError,
    adding_experiment,
    auc_score,
    average_precision,
    emit_report,
    mae,
    masking_experiment,
    metrics_suite,
    random_attribution_method,
    rmse,
    self_attribution_method,
    subset_size_eval,
    timing_experiment,
    timing_self_attribution,
    write_csv,
)
from sasanet.evaluation.report import attribution_bar_svg, attribution_scatter_svg


def pairwise_auc(labels, scores):
    """O(n^2) counting oracle: wins plus half-credit for ties."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (pos.size * neg.size)


def threshold_ap(labels, scores):
    """Recount precision/recall from scratch at each unique threshold."""
    n_pos = int(labels.sum())
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(scores.tolist()), reverse=True):
        pred = scores >= t
        tp = int(np.sum((labels == 1) & pred))
        fp = int(np.sum((labels == 0) & pred))
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


class TestMetrics:
    def test_perfect_separation(self):
        labels = np.array([0, 0, 1, 1], dtype=float)
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        assert auc_score(labels, scores) == 1.0
        assert average_precision(labels, scores) == 1.0

    def test_pairwise_example(self):
        # pairs: (0.2 vs 0.6) loses, (0.8 vs 0.6) wins -> 1/2
        assert auc_score(np.array([1, 0, 1.0]), np.array([0.2, 0.6, 0.8])) == 0.5

    def test_exact_predictions_zero_error(self):
        y = np.array([1.0, 2.0, 3.0])
        assert rmse(y, y) == 0.0 and mae(y, y) == 0.0

    def test_single_class_auc_undefined(self):
        with pytest.raises(MetricError, match="single class"):
            auc_score(np.ones(4), np.arange(4.0))

    def test_nonbinary_labels_rejected(self):
        with pytest.raises(MetricError):
            auc_score(np.array([0.0, 0.5]), np.array([0.1, 0.2]))

    @given(st.integers(10, 200), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_auc_equals_pairwise_oracle_exactly(self, n, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, n).astype(float)
        if labels.sum() in (0, n):
            labels[0], labels[-1] = 0.0, 1.0
        scores = np.round(rng.standard_normal(n), 2)  # force ties
        assert auc_score(labels, scores) == pairwise_auc(labels, scores)

    @given(st.integers(10, 200), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_ap_equals_threshold_oracle_exactly(self, n, seed):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, n).astype(float)
        if labels.sum() == 0:
            labels[0] = 1.0
        scores = np.round(rng.standard_normal(n), 2)
        assert average_precision(labels, scores) == threshold_ap(labels, scores)

    def test_suite_routing(self):
        out = metrics_suite(np.array([0.2, 0.9]), np.array([0.0, 1.0]), "classification")
        assert set(out) == {"ap", "auc"}
        out = metrics_suite(np.array([1.0, 2.0]), np.array([1.5, 2.5]), "regression")
        assert set(out) == {"rmse", "mae"}


class TestMaskingExperiment:
    def test_k_zero_row_is_unmasked_baseline(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        vals, labels = test.values[:80], test.labels[:80]
        rows = masking_experiment(model, {"sasanet": self_attribution_method()},
                                  vals, labels, k_max=2)
        base = [r for r in rows if r["k"] == 0][0]
        n = model.n_features
        ids = np.tile(np.arange(n), (80, 1))
        preds = model.predict_batch(ids, vals)
        assert base["auc"] == pytest.approx(auc_score(labels, preds), abs=1e-12)

    def test_informed_masking_beats_random(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        vals, labels = test.values[:150], test.labels[:150]
        methods = {"sasanet": self_attribution_method(),
                   "random": random_attribution_method(seed=4)}
        rows = masking_experiment(model, methods, vals, labels, k_max=3)
        for k in (1, 2, 3):
            sas = [r for r in rows if r["k"] == k and r["method"] == "sasanet"][0]
            rnd = [r for r in rows if r["k"] == k and r["method"] == "random"][0]
            assert sas["ap"] < rnd["ap"], k

    def test_k_max_must_stay_below_n(self, binary_task):
        model = binary_task["model"]
        with pytest.raises(ExperimentError):
            masking_experiment(model, {}, np.zeros((2, 8)), np.array([0.0, 1.0]),
                               k_max=8)

    def test_fixed_mode_runs(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        rows = masking_experiment(model, {"sasanet": self_attribution_method()},
                                  test.values[:40], test.labels[:40], k_max=2,
                                  recompute=False)
        assert all(r["mode"] == "fixed" for r in rows)


class TestAddingExperiment:
    def test_full_k_recovers_model_metrics(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        vals, labels = test.values[:80], test.labels[:80]
        n = model.n_features
        rows = adding_experiment(model, {"sasanet": self_attribution_method()},
                                 vals, labels, k_max=n)
        last = [r for r in rows if r["k"] == n][0]
        ids = np.tile(np.arange(n), (80, 1))
        preds = model.predict_batch(ids, vals)
        assert last["auc"] == pytest.approx(auc_score(labels, preds), abs=1e-12)

    def test_informed_adding_beats_random_at_one(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        vals, labels = test.values[:150], test.labels[:150]
        methods = {"sasanet": self_attribution_method(),
                   "random": random_attribution_method(seed=4)}
        rows = adding_experiment(model, methods, vals, labels, k_max=1)
        sas = [r for r in rows if r["method"] == "sasanet"][0]
        rnd = [r for r in rows if r["method"] == "random"][0]
        assert sas["ap"] > rnd["ap"]


class TestSubsetSizeEval:
    def test_full_size_matches_standard_metrics(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        vals, labels = test.values[:100], test.labels[:100]
        rows = subset_size_eval(model, vals, labels, seed=0)
        n = model.n_features
        full = [r for r in rows if r["k"] == n][0]
        ids = np.tile(np.arange(n), (100, 1))
        preds = model.predict_batch(ids, vals)
        assert full["auc"] == pytest.approx(auc_score(labels, preds), abs=1e-12)

    def test_k_zero_reported_null_for_classification(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        rows = subset_size_eval(model, test.values[:50], test.labels[:50], seed=0)
        zero = [r for r in rows if r["k"] == 0][0]
        assert zero["auc"] is None and zero["ap"] is None

    def test_metric_improves_with_more_features(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        rows = subset_size_eval(model, test.values[:400], test.labels[:400], seed=0)
        aucs = [r["auc"] for r in rows if r["k"] >= 1]
        inversions = sum(1 for a, b in zip(aucs, aucs[1:]) if b < a)
        assert inversions <= 2
        assert aucs[-1] > aucs[0]


class TestTiming:
    def test_zero_samples_zero_time(self, binary_task):
        rows = timing_experiment(binary_task["model"],
                                 {"sasanet": timing_self_attribution()},
                                 np.zeros((0, 8)), n_samples=0)
        assert rows[0]["n_samples"] == 0 and rows[0]["total_seconds"] == 0.0

    def test_time_roughly_linear_in_samples(self, binary_task):
        model = binary_task["model"]
        test = binary_task["test"]
        fn = {"sasanet": timing_self_attribution()}
        timing_experiment(model, fn, test.values[:64], n_samples=64)  # extra warm-up
        small = timing_experiment(model, fn, test.values[:500], n_samples=150)[0]
        big = timing_experiment(model, fn, test.values[:500], n_samples=300)[0]
        ratio = big["total_seconds"] / small["total_seconds"]
        assert 2.0 * 0.75 <= ratio <= 2.0 * 1.25


class TestReport:
    def test_empty_results_give_header_only_csv(self, tmp_path):
        files = emit_report({"masking": []}, tmp_path)
        content = (tmp_path / "masking.csv").read_text().strip().splitlines()
        assert len(content) == 1 and content[0] == "method,k"
        assert files == [tmp_path / "masking.csv"]

    def test_csv_round_trip(self, tmp_path):
        rows = [{"method": "a", "k": 1, "ap": 0.123456789012345, "auc": None},
                {"method": "b", "k": 2, "ap": 1.0, "auc": 0.5}]
        emit_report({"masking": rows}, tmp_path)
        import csv

        with open(tmp_path / "masking.csv") as fh:
            back = list(csv.DictReader(fh))
        assert float(back[0]["ap"]) == rows[0]["ap"]
        assert back[0]["auc"] == ""
        assert float(back[1]["auc"]) == 0.5

    def test_svg_outputs_are_well_formed_xml(self, tmp_path):
        rng = np.random.default_rng(0)
        phi = rng.standard_normal((40, 5))
        results = {"attributions": {"feature_names": [f"x{i}" for i in range(5)],
                                    "phi": phi, "phi0": 0.2, "f0": 1.0}}
        emit_report(results, tmp_path)
        for name in ("attribution_overview.svg", "attribution_sample0.svg"):
            tree = ET.parse(tmp_path / "plots" / name)
            assert tree.getroot().tag.endswith("svg")

    def test_svg_builders_standalone(self):
        phi = np.array([[0.5, -1.0], [0.2, 0.3]])
        scatter = attribution_scatter_svg(["a", "b"], phi)
        bar = attribution_bar_svg(["a", "b"], phi[0], 0.1, 0.4)
        for doc in (scatter, bar):
            root = ET.fromstring(doc)
            assert root.tag.endswith("svg")

    def test_only_requested_sections_written(self, tmp_path):
        emit_report({"timing": [{"method": "x", "total_seconds": 1.0}]}, tmp_path)
        assert (tmp_path / "timing.csv").exists()
        assert not (tmp_path / "masking.csv").exists()
        assert not (tmp_path / "metrics.csv").exists()

    def test_write_csv_formats_repr_floats(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", [{"v": 0.1 + 0.2}], ["v"])
        assert path.read_text().splitlines()[1] == repr(0.1 + 0.2)
