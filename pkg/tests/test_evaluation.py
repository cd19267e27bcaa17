"""Tests for AUC, the paired bootstrap test, splitting and permutation importance."""

import math

import numpy as np
import pandas as pd
import pytest

from hftnet.evaluation import (
    NS_PER_DAY, accuracy, auc_score, bootstrap_auc_test, cross_fit_mda, cross_fit_predict, grouped_mda,
    make_splits, mda, replicate_histogram, roc_auc, trapezoid_area,
)
from hftnet.exceptions import DataError, DegenerateError, SplitError
from hftnet.forest import fit_forest_arrays
from hftnet.models import (
    Dataset, ForestParams, MdaReport, MeasureKind, SplitMode, SplitSettings, TaskDescriptor,
)


def naive_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l != 1]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def hourly(n, start="2018-01-02 10:00"):
    return pd.date_range(start, periods=n, freq="h", tz="America/New_York")


def make_dataset(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=n) > 0, 1, -1).astype(np.int8)
    return Dataset(
        bar_index=np.arange(n),
        timestamps=hourly(n),
        X=X,
        y=y,
        feature_names=("signal", "noise_a", "noise_b"),
        task=TaskDescriptor(target="AAA", measure=MeasureKind.VOLATILITY, horizon=10, lookback=20),
    )


class TestAuc:

    def test_textbook_example(self):
        assert auc_score(np.array([0.1, 0.4, 0.35, 0.8]), np.array([-1, -1, 1, 1])) == pytest.approx(0.75)

    def test_matches_pairwise_count_with_ties(self):
        rng = np.random.default_rng(0)
        scores = np.round(rng.random(200), 1)
        labels = np.where(rng.random(200) < 0.4, 1, -1)
        assert auc_score(scores, labels) == pytest.approx(naive_auc(scores, labels), abs=1e-12)

    def test_constant_scores_give_one_half(self):
        assert auc_score(np.full(6, 0.3), np.array([1, -1, 1, -1, -1, 1])) == pytest.approx(0.5)

    def test_single_class_is_degenerate(self):
        with pytest.raises(DegenerateError):
            auc_score(np.array([0.1, 0.2]), np.array([1, 1]))

    def test_roc_curve_area_equals_rank_auc(self):
        rng = np.random.default_rng(1)
        scores = np.round(rng.random(150), 2)
        labels = np.where(rng.random(150) < 0.5, 1, -1)
        roc = roc_auc(scores, labels)
        assert roc.fpr[0] == 0.0 and roc.tpr[0] == 0.0
        assert roc.fpr[-1] == 1.0 and roc.tpr[-1] == 1.0
        assert math.isinf(roc.thresholds[0])
        assert trapezoid_area(roc.fpr, roc.tpr) == pytest.approx(roc.auc, abs=1e-12)

    def test_accuracy_predicts_positive_at_threshold(self):
        assert accuracy(np.array([0.5, 0.49, 0.9]), np.array([1, -1, -1])) == pytest.approx(2 / 3)

    def test_reversed_scores_give_the_complement(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(4, 200))
            scores = np.round(rng.random(n), 2)
            labels = np.where(rng.random(n) < 0.5, 1, -1)
            labels[:2] = [1, -1]
            assert auc_score(scores, labels) + auc_score(1.0 - scores, labels) == pytest.approx(1.0, abs=1e-12)

    def test_strictly_increasing_transforms_leave_auc_unchanged(self):
        rng = np.random.default_rng(6)
        scores = np.round(rng.random(300), 2)
        labels = np.where(rng.random(300) < 0.4, 1, -1)
        auc = auc_score(scores, labels)
        assert auc_score(np.exp(5.0 * scores), labels) == auc
        assert auc_score(scores ** 3 + scores, labels) == auc
        assert auc_score(np.log1p(scores), labels) == auc

    def test_rank_form_matches_pairwise_count_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            scores = np.round(rng.random(n), 1)
            labels = np.where(rng.random(n) < 0.5, 1, -1)
            labels[:2] = [1, -1]
            assert auc_score(scores, labels) == pytest.approx(naive_auc(scores, labels), abs=1e-12)


class TestBootstrapAucTest:

    def test_identical_models_are_degenerate(self):
        rng = np.random.default_rng(0)
        labels = np.where(rng.random(80) < 0.5, 1, -1)
        scores = rng.random(80)
        result = bootstrap_auc_test(scores, scores, labels, B=200, seed=1)
        assert result.diff == 0.0
        assert result.s == 0.0
        assert result.degenerate
        assert math.isnan(result.d_stat)
        assert result.p_value == 1.0

    def test_informative_model_is_significant(self):
        rng = np.random.default_rng(2)
        labels = np.where(rng.random(200) < 0.5, 1, -1)
        p1 = rng.random(200)
        p2 = labels + rng.normal(0.0, 0.7, size=200)
        result = bootstrap_auc_test(p1, p2, labels, B=500, seed=3)
        assert result.auc2 > result.auc1
        assert result.d_stat == pytest.approx(result.diff / result.s)
        assert result.p_value < 0.01
        assert result.replicate_diffs.shape == (500,)

    def test_result_does_not_depend_on_worker_count(self):
        rng = np.random.default_rng(4)
        labels = np.where(rng.random(60) < 0.5, 1, -1)
        p1, p2 = rng.random(60), rng.random(60)
        serial = bootstrap_auc_test(p1, p2, labels, B=300, seed=9, jobs=1)
        parallel = bootstrap_auc_test(p1, p2, labels, B=300, seed=9, jobs=2)
        np.testing.assert_array_equal(serial.replicate_diffs, parallel.replicate_diffs)
        assert serial.p_value == parallel.p_value

    def test_mismatched_lengths_are_rejected(self):
        with pytest.raises(ValueError):
            bootstrap_auc_test(np.ones(3), np.ones(4), np.array([1, -1, 1]))

    def test_too_few_replicates_are_rejected(self):
        labels = np.array([1, -1] * 10)
        with pytest.raises(ValueError):
            bootstrap_auc_test(np.linspace(0, 1, 20), np.linspace(1, 0, 20), labels, B=99)

    def test_histogram_counts_every_replicate(self):
        rng = np.random.default_rng(8)
        labels = np.where(rng.random(80) < 0.5, 1, -1)
        result = bootstrap_auc_test(rng.random(80), rng.random(80), labels, B=250, seed=2)
        hist = replicate_histogram(result, bins=25)
        assert len(hist) == 25
        assert hist["count"].sum() == 250
        assert hist["bin_left"].iloc[0] == result.replicate_diffs.min()
        assert hist["bin_right"].iloc[-1] == result.replicate_diffs.max()

    @pytest.mark.slow
    def test_null_rejection_rate_is_near_nominal(self):
        rejections = 0
        for trial in range(200):
            rng = np.random.default_rng(1000 + trial)
            labels = np.where(rng.random(100) < 0.5, 1, -1)
            result = bootstrap_auc_test(rng.random(100), rng.random(100), labels, B=200, seed=trial)
            rejections += result.p_value < 0.05
        assert rejections / 200 <= 0.10


class TestSplits:

    def test_chronological_split_purges_the_boundary(self):
        timestamps = hourly(480)
        settings = SplitSettings(mode=SplitMode.CHRONOLOGICAL, train_fraction=0.5, purge_days=1.0)
        plan = make_splits(timestamps, settings)
        assert len(plan.folds) == 1
        fold = plan.folds[0]
        t = timestamps.asi8
        assert t[fold.test].min() - t[fold.train].max() > NS_PER_DAY
        assert fold.train.max() < fold.test.min()
        assert fold.test[-1] == len(timestamps) - 1

    def test_purged_cv_partitions_rows_and_respects_purge(self):
        timestamps = hourly(600)
        settings = SplitSettings(mode=SplitMode.PURGED_CV, n_groups=4, purge_days=1.0)
        plan = make_splits(timestamps, settings)
        t = timestamps.asi8
        tested = np.sort(np.concatenate([f.test for f in plan.folds]))
        np.testing.assert_array_equal(tested, np.arange(600))
        for fold, (lo, hi) in zip(plan.folds, plan.boundaries):
            train_t = t[fold.train]
            assert not ((train_t > lo.value - NS_PER_DAY) & (train_t < hi.value + NS_PER_DAY)).any()
            assert np.intersect1d(fold.train, fold.test).size == 0

    def test_random_plans_never_train_near_a_test_interval(self):
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(100):
            n = int(rng.integers(150, 500))
            keep = np.sort(rng.choice(n, size=int(0.8 * n), replace=False))
            timestamps = hourly(n)[keep]
            purge_days = round(float(rng.uniform(0.0, 1.0)), 3)
            if rng.random() < 0.5:
                settings = SplitSettings(mode=SplitMode.PURGED_CV, n_groups=int(rng.integers(2, 9)),
                                         purge_days=purge_days)
            else:
                settings = SplitSettings(mode=SplitMode.CHRONOLOGICAL, purge_days=purge_days,
                                         train_fraction=round(float(rng.uniform(0.3, 0.7)), 2))
            try:
                plan = make_splits(timestamps, settings)
            except SplitError:
                continue
            checked += 1
            t = timestamps.asi8
            purge = int(round(purge_days * NS_PER_DAY))
            for fold in plan.folds:
                test_t = t[fold.test]
                train_t = t[fold.train]
                assert ((train_t < test_t.min() - purge) | (train_t > test_t.max() + purge)).all()
                assert np.intersect1d(fold.train, fold.test).size == 0
            if settings.mode is SplitMode.PURGED_CV:
                tested = np.sort(np.concatenate([f.test for f in plan.folds]))
                np.testing.assert_array_equal(tested, np.arange(len(timestamps)))
        assert checked >= 90

    def test_purge_wider_than_the_sample_empties_a_fold(self):
        settings = SplitSettings(mode=SplitMode.CHRONOLOGICAL, train_fraction=0.5, purge_days=10.0)
        with pytest.raises(SplitError) as excinfo:
            make_splits(hourly(48), settings)
        assert excinfo.value.fold == 0

    def test_unsorted_timestamps_are_rejected(self):
        with pytest.raises(DataError):
            make_splits(hourly(10)[::-1], SplitSettings())

    def test_projection_keeps_wall_clock_boundaries(self):
        timestamps = hourly(480)
        plan = make_splits(timestamps, SplitSettings(purge_days=1.0))
        subset = timestamps[5:470]
        projected = plan.project(subset)
        lo = plan.boundaries[0][0]
        assert projected.boundaries == plan.boundaries
        assert (subset[projected.folds[0].test] >= lo).all()
        assert (subset[projected.folds[0].train] < lo - pd.Timedelta(days=1)).all()


class TestCrossFit:

    def test_purged_cv_scores_every_row(self):
        data = make_dataset()
        plan = make_splits(data.timestamps, SplitSettings(mode=SplitMode.PURGED_CV, n_groups=3, purge_days=0.25))
        fit = cross_fit_predict(data, plan, ForestParams(trees=10), seed=1)
        assert fit.tested.all()
        assert np.isfinite(fit.scores).all()
        assert len(fit.models) == 3
        assert auc_score(fit.scores, data.y) > 0.7

    def test_chronological_mode_scores_only_the_test_half(self):
        data = make_dataset()
        plan = make_splits(data.timestamps, SplitSettings(purge_days=0.25))
        fit = cross_fit_predict(data, plan, ForestParams(trees=5), seed=1)
        np.testing.assert_array_equal(fit.test_rows, plan.folds[0].test)
        assert np.isnan(fit.scores[~fit.tested]).all()


class TestMda:

    def test_unused_feature_has_zero_importance(self):
        rng = np.random.default_rng(0)
        x0 = np.concatenate([np.linspace(-1.0, -0.05, 30), np.linspace(0.05, 1.0, 30)])
        X = np.column_stack([x0, rng.normal(size=60)])
        y = np.where(x0 > 0, 1, -1)
        model = fit_forest_arrays(X, y, ["signal", "noise"], ForestParams(trees=15, max_features=2), seed=0)
        report = mda(model, X, y, seed=5, repeats=3)
        values = report.mean
        assert values["noise"] == 0.0
        assert values["signal"] > 0.0
        assert report.baseline_accuracy[0] > 0.9

    def test_cross_fit_mda_has_one_row_per_fold_and_feature(self):
        data = make_dataset()
        plan = make_splits(data.timestamps, SplitSettings(mode=SplitMode.PURGED_CV, n_groups=3, purge_days=0.25))
        fit = cross_fit_predict(data, plan, ForestParams(trees=10), seed=1)
        report = cross_fit_mda(data, fit, seed=2)
        assert len(report.per_fold) == 9
        assert report.mean["signal"] > report.mean["noise_a"]

    def test_planted_feature_loses_accuracy_when_permuted(self):
        data = make_dataset(n=400, seed=3)
        plan = make_splits(data.timestamps, SplitSettings(mode=SplitMode.PURGED_CV, n_groups=10, purge_days=0.25))
        fit = cross_fit_predict(data, plan, ForestParams(trees=10), seed=4)
        report = cross_fit_mda(data, fit, seed=5)
        assert sorted(report.per_fold["fold"].unique()) == list(range(10))
        assert report.mean["signal"] > 0.05

    def test_grouped_mda_averages_members_per_fold(self):
        report = MdaReport(
            per_fold=pd.DataFrame({
                "fold": [0, 0, 0, 1, 1, 1],
                "feature": ["a", "b", "c"] * 2,
                "mda": [0.1, 0.3, 0.5, 0.2, 0.4, 0.6],
            }),
            baseline_accuracy={0: 0.6, 1: 0.6},
        )
        grouped = grouped_mda(report, {"first": ["a", "b"], "last": ["c"]})
        first = grouped[grouped["group"] == "first"]["mda"].tolist()
        assert first == pytest.approx([0.2, 0.3])
        assert grouped[grouped["group"] == "last"]["mda"].tolist() == pytest.approx([0.5, 0.6])

    def test_grouped_mda_rejects_unknown_features(self):
        report = MdaReport(
            per_fold=pd.DataFrame({"fold": [0], "feature": ["a"], "mda": [0.1]}),
            baseline_accuracy={0: 0.5},
        )
        with pytest.raises(DataError):
            grouped_mda(report, {"g": ["a", "zzz"]})
