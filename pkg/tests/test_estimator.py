import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccqg.estimator import (
    ComplexityEstimator,
    ComplexityLabel,
    ConfusionMatrix,
    FeatureNormalizer,
    calibrate_threshold,
    classify,
    coerce_label,
    cpx_score,
    evaluate_estimator,
    fit_normalizer,
    load_normalizer,
    normalize,
    read_feature_records,
    report_from_confusion,
    save_normalizer,
    write_feature_records,
)

S = ComplexityLabel.SIMPLE
C = ComplexityLabel.COMPLEX


class TestNormalizer:
    def test_fit_extremes(self):
        x = np.array([
            [1, 0, 1, 1, 0],
            [3, 2, 5, 2, 4],
            [5, 1, 3, 3, 2],
        ], dtype=float)
        norm = fit_normalizer(x, lam=0.5)
        assert norm.mins == (1, 0, 1, 1, 0)
        assert norm.maxs == (5, 2, 5, 3, 4)
        assert norm.lam == 0.5

    def test_single_item_degenerate(self):
        norm = fit_normalizer(np.array([[2, 2, 2, 2, 2]], dtype=float))
        assert norm.mins == norm.maxs == (2, 2, 2, 2, 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_normalizer(np.zeros((0, 5)))

    def test_normalize_endpoints_and_midpoint(self):
        norm = FeatureNormalizer(
            mins=(0, 0, 0, 0, 0), maxs=(2, 2, 2, 2, 2), lam=0.5,
        )
        np.testing.assert_allclose(normalize(np.zeros(5), norm), np.zeros(5))
        np.testing.assert_allclose(normalize(np.full(5, 2.0), norm), np.ones(5))
        np.testing.assert_allclose(normalize(np.ones(5), norm), np.full(5, 0.5))

    def test_degenerate_feature_maps_to_zero(self):
        norm = FeatureNormalizer(
            mins=(1, 0, 3, 0, 0), maxs=(1, 1, 3, 1, 1), lam=0.5,
        )
        out = normalize(np.array([1.0, 0.5, 3.0, 0.0, 1.0]), norm)
        assert out[0] == 0.0 and out[2] == 0.0

    def test_out_of_range_inputs_clamped(self):
        norm = FeatureNormalizer(
            mins=(0, 0, 0, 0, 0), maxs=(1, 1, 1, 1, 1), lam=0.5,
        )
        out = normalize(np.array([-1.0, 2.0, 0.5, 0.0, 1.0]), norm)
        assert out[0] == 0.0 and out[1] == 1.0

    def test_invariant_validation(self):
        with pytest.raises(ValueError):
            FeatureNormalizer(mins=(2,) * 5, maxs=(1,) * 5, lam=0.5)
        with pytest.raises(ValueError):
            FeatureNormalizer(mins=(0,) * 5, maxs=(1,) * 5, lam=1.5)

    def test_save_load_round_trip(self, tmp_path):
        norm = fit_normalizer(
            np.array([[1, 0, 1e6, 4.0, 0.3], [2, 1, 11.65, 1.0, 8.0]]),
            lam=0.682,
        )
        path = tmp_path / "norm.txt"
        save_normalizer(path, norm)
        assert load_normalizer(path) == norm

    def test_load_reports_missing_key(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("f1_min=0.0\n")
        with pytest.raises(ValueError, match="missing key"):
            load_normalizer(path)


class TestScoreAndClassify:
    def test_cpx_trivials(self):
        assert cpx_score(np.zeros(5)) == 0.0
        assert cpx_score(np.ones(5)) == 1.0
        assert cpx_score(np.array([0.2, 0.4, 0.6, 0.8, 1.0])) == pytest.approx(0.6)

    def test_cpx_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            cpx_score(np.array([0.2, 0.4, 0.6, 0.8, 1.5]))

    def test_classify_default_threshold(self):
        assert classify(0.70, 0.682) is C
        assert classify(0.682, 0.682) is S
        assert classify(0.0, 0.0) is S

    @given(st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1))
    def test_classify_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        if classify(lo, 0.5) is C:
            assert classify(hi, 0.5) is C

    def test_cpx_permutation_invariant_and_bounded(self):
        x = np.array([0.1, 0.9, 0.4, 0.4, 0.7])
        assert cpx_score(x) == cpx_score(x[::-1].copy())
        assert x.min() <= cpx_score(x) <= x.max()


class TestCalibration:
    def test_two_point_tie_break(self):
        lam = calibrate_threshold([0.2, 0.9], [S, C])
        assert lam == pytest.approx(0.20)

    def test_planted_threshold_recovered(self):
        rng = np.random.default_rng(7)
        scores = rng.uniform(0, 1, size=300)
        gold = [C if s > 0.65 else S for s in scores]
        lam = calibrate_threshold(scores.tolist(), gold)
        assert abs(lam - 0.65) <= 0.01
        pred = [classify(s, lam) for s in scores]
        assert evaluate_estimator(pred, gold).macro_f1 == 1.0

    def test_inverted_labels_still_deterministic(self):
        scores = [0.1, 0.2, 0.8, 0.9]
        gold = [C, C, S, S]
        lam1 = calibrate_threshold(scores, gold)
        lam2 = calibrate_threshold(scores, gold)
        assert lam1 == lam2
        pred = [classify(s, lam1) for s in scores]
        assert evaluate_estimator(pred, gold).macro_f1 < 1.0

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            calibrate_threshold([0.1, 0.9], [S, S])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            calibrate_threshold([0.1], [S, C])


class TestEvaluate:
    def test_table_counts_in_domain(self):
        report = report_from_confusion(
            ConfusionMatrix(ts_ps=5271, ts_pc=155, tc_ps=210, tc_pc=3407)
        )
        assert report.f1_simple == pytest.approx(0.9665352525900798, abs=1e-9)
        assert report.f1_complex == pytest.approx(0.9491572642429308, abs=1e-9)
        assert report.macro_f1 == pytest.approx(0.9578462584165053, abs=1e-9)
        assert abs(report.macro_f1 - 0.958) < 5e-4

    def test_table_counts_out_domain(self):
        report = report_from_confusion(
            ConfusionMatrix(ts_ps=93, ts_pc=15, tc_ps=12, tc_pc=67)
        )
        assert report.weighted_f1 == pytest.approx(0.8559433794115543, abs=1e-9)
        assert abs(report.weighted_f1 - 0.856) < 5e-4

    def test_all_correct(self):
        report = evaluate_estimator([S, C, S, C], [S, C, S, C])
        assert report.macro_f1 == 1.0
        assert report.weighted_f1 == 1.0
        assert report.confusion.total == 4

    def test_degenerate_class_gets_zero_f1(self):
        report = evaluate_estimator([S, S], [S, C])
        assert report.f1_complex == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_estimator([S], [S, C])
        with pytest.raises(ValueError):
            evaluate_estimator([], [])

    @given(st.lists(
        st.tuples(st.sampled_from(["simple", "complex"]),
                  st.sampled_from(["simple", "complex"])),
        min_size=1, max_size=50,
    ))
    def test_matches_brute_force_counts(self, pairs):
        pred = [p for p, _ in pairs]
        gold = [g for _, g in pairs]
        report = evaluate_estimator(pred, gold)
        cm = report.confusion
        assert cm.ts_ps == sum(1 for p, g in pairs if g == "simple" and p == "simple")
        assert cm.ts_pc == sum(1 for p, g in pairs if g == "simple" and p == "complex")
        assert cm.tc_ps == sum(1 for p, g in pairs if g == "complex" and p == "simple")
        assert cm.tc_pc == sum(1 for p, g in pairs if g == "complex" and p == "complex")
        assert cm.total == len(pairs)


class TestRecordsIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "features.jsonl"
        records = [
            {"id": "a", "raw": [1, 0, 2.5, 4, 1], "normalized": [0, 0, 0.5, 1, 0.1],
             "score": 0.32, "label": "simple"},
            {"id": "b", "raw": [3, 2, 9.5, 1, 7], "normalized": [1, 1, 1, 0, 0.9],
             "score": 0.78, "label": "complex"},
        ]
        write_feature_records(path, records)
        assert read_feature_records(path) == records

    def test_write_is_deterministic(self, tmp_path):
        rec = [{"b": 1, "a": 2, "id": "x"}]
        p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
        write_feature_records(p1, rec)
        write_feature_records(p2, rec)
        assert p1.read_bytes() == p2.read_bytes()


class TestEstimatorFacade:
    def make_data(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 10, size=(40, 5))
        x[:, 0] += 1  # keep f1-like column >= 1
        return x

    def test_fit_predict_shapes(self):
        x = self.make_data()
        est = ComplexityEstimator(lam=0.5).fit(x)
        scores = est.decision_function(x)
        labels = est.predict(x)
        assert scores.shape == (40,)
        assert len(labels) == 40
        assert set(labels) <= {S, C}
        assert est.transform(x).shape == (40, 5)

    def test_get_params_round_trip(self):
        est = ComplexityEstimator(lam=0.7, calibrate=True)
        params = est.get_params()
        assert params == {"lam": 0.7, "calibrate": True}
        clone = ComplexityEstimator(**params)
        assert clone.get_params() == params

    def test_calibrating_fit_recovers_threshold(self):
        x = self.make_data()
        ref = ComplexityEstimator(lam=0.0).fit(x)
        scores = ref.decision_function(x)
        gold = [C if s > 0.55 else S for s in scores]
        est = ComplexityEstimator(calibrate=True).fit(x, gold)
        assert abs(est.normalizer_.lam - 0.55) <= 0.01
        assert est.score(x, gold) == 1.0

    def test_calibrate_requires_labels(self):
        with pytest.raises(ValueError):
            ComplexityEstimator(calibrate=True).fit(self.make_data())

    def test_unfitted_raises(self):
        with pytest.raises(ValueError):
            ComplexityEstimator().predict(self.make_data())

    def test_coerce_label(self):
        assert coerce_label("Simple") is S
        assert coerce_label("COMPLEX") is C
        assert coerce_label(C) is C
        with pytest.raises(ValueError):
            coerce_label("medium")
