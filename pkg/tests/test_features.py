"""Microstructure variables against naive loop implementations."""

import math

import numpy as np
import pytest

from hftnet.exceptions import InsufficientDataError
from hftnet.features import (
    amihud_lambda, bvc_buy_volume, compute_frame, kyle_lambda, roll_impact, roll_measure, vpin,
)
from hftnet.models import FeatureConfig, SigmaMode

from conftest import make_bar_series

W = 20
REL = 1e-10


def naive_roll(closes):
    dp = [closes[i + 1] - closes[i] for i in range(len(closes) - 1)]
    a, b = dp[1:], dp[:-1]
    mean_a, mean_b = sum(a) / len(a), sum(b) / len(b)
    cov = sum((x - mean_a) * (y - mean_b) for x, y in zip(a, b)) / len(a)
    return 2.0 * math.sqrt(abs(cov))


def naive_kyle(closes, volumes, t):
    denominator = 0.0
    for tau in range(t - W, t + 1):
        change = closes[tau] - closes[tau - 1]
        sign = int(change > 0) - int(change < 0)
        denominator += sign * volumes[tau]
    return (closes[t] - closes[t - W]) / denominator


def naive_amihud(closes, dollar, t):
    total = 0.0
    for tau in range(t - W + 1, t + 1):
        total += abs(closes[tau] / closes[tau - 1] - 1.0) / dollar[tau]
    return total / W


def phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def sample_sd(values):
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def naive_vpin(closes, volumes, t, sigma):
    total = 0.0
    for tau in range(t - W + 1, t + 1):
        buy = volumes[tau] * phi((closes[tau] - closes[tau - 1]) / sigma)
        sell = volumes[tau] - buy
        total += abs(sell - buy) / volumes[tau]
    return total / W


class TestScalarDefinitions:

    def test_bvc_splits_volume_evenly_on_zero_price_change(self):
        assert bvc_buy_volume(0.0, 1.0, 1000.0) == pytest.approx(500.0)

    def test_bvc_uses_epsilon_for_zero_sigma(self):
        assert bvc_buy_volume(0.5, 0.0, 1000.0) == pytest.approx(1000.0)

    def test_roll_of_alternating_prices_matches_loop(self):
        closes = np.array([10.0, 11.0] * 11)[:W + 1]
        assert roll_measure(closes) == pytest.approx(naive_roll(list(closes)), rel=REL)

    def test_roll_impact_missing_for_zero_dollar_volume(self):
        assert math.isnan(roll_impact(0.2, 0.0))
        assert roll_impact(0.2, 4.0) == pytest.approx(0.05)

    def test_flat_window_makes_kyle_missing(self):
        closes = np.full(W + 2, 10.0)
        assert math.isnan(kyle_lambda(closes, np.full(W + 1, 100.0)))

    def test_kyle_rejects_misaligned_windows(self):
        with pytest.raises(ValueError):
            kyle_lambda(np.ones(5), np.ones(5))

    def test_amihud_missing_when_any_dollar_volume_is_zero(self):
        assert math.isnan(amihud_lambda(np.full(3, 0.01), np.array([1.0, 0.0, 2.0])))

    def test_bvc_is_monotone_in_price_change(self):
        changes = np.linspace(-3.0, 3.0, 121)
        buys = bvc_buy_volume(changes, 0.7, 500.0)
        assert (np.diff(buys) >= 0).all()
        assert buys[0] >= 0.0 and buys[-1] <= 500.0

    def test_bvc_up_and_down_moves_split_the_volume(self):
        rng = np.random.default_rng(4)
        changes = rng.normal(0.0, 0.5, size=50)
        volumes = rng.uniform(100.0, 5000.0, size=50)
        total = bvc_buy_volume(changes, 0.4, volumes) + bvc_buy_volume(-changes, 0.4, volumes)
        np.testing.assert_allclose(total, volumes, rtol=1e-12)

    @pytest.mark.parametrize("c", [4.0, 3.7, 0.01])
    def test_price_scale_leaves_buy_fraction_and_vpin_unchanged(self, random_series, c):
        frame = random_series.frame
        scaled = make_bar_series(frame["close"] * c, frame["volume"], dollar_volumes=frame["dollar_volume"] * c)
        original = compute_frame(random_series, FeatureConfig(lookback=W))
        rescaled = compute_frame(scaled, FeatureConfig(lookback=W))
        dp = np.diff(frame["close"].to_numpy())
        fraction = bvc_buy_volume(dp, original.bvc_sigma, 1.0)
        scaled_fraction = bvc_buy_volume(dp * c, rescaled.bvc_sigma, 1.0)
        np.testing.assert_allclose(scaled_fraction, fraction, rtol=1e-10)
        np.testing.assert_allclose(rescaled.frame["vpin"], original.frame["vpin"], rtol=1e-10, equal_nan=True)

    def test_vpin_bounds(self):
        rng = np.random.default_rng(5)
        volumes = rng.uniform(1.0, 10.0, size=W)
        buys = volumes * rng.uniform(0.0, 1.0, size=W)
        assert 0.0 <= vpin(volumes, buys) <= 1.0
        assert vpin(volumes, volumes) == pytest.approx(1.0)
        assert vpin(volumes, volumes / 2) == pytest.approx(0.0)


class TestComputeFrame:

    def test_matches_loops_at_every_bar(self, random_series):
        frame = compute_frame(random_series, FeatureConfig(lookback=W)).frame
        closes = list(random_series.closes)
        volumes = list(random_series.volumes)
        dollar = list(random_series.dollar_volumes)
        sigma = sample_sd([closes[i + 1] - closes[i] for i in range(len(closes) - 1)])

        for t in range(W + 1, len(closes)):
            row = frame.iloc[t]
            roll = naive_roll(closes[t - W:t + 1])
            assert row["roll"] == pytest.approx(roll, rel=REL)
            assert row["roll_impact"] == pytest.approx(roll / dollar[t], rel=REL)
            assert row["kyle"] == pytest.approx(naive_kyle(closes, volumes, t), rel=REL)
            assert row["amihud"] == pytest.approx(naive_amihud(closes, dollar, t), rel=REL)
            assert row["vpin"] == pytest.approx(naive_vpin(closes, volumes, t, sigma), rel=REL)

    def test_vectorized_values_equal_scalar_definitions(self, random_series):
        frame = compute_frame(random_series, FeatureConfig(lookback=W)).frame
        closes = random_series.closes
        volumes = random_series.volumes
        t = 100
        assert frame["roll"].iloc[t] == pytest.approx(roll_measure(closes[t - W:t + 1]), rel=REL)
        assert frame["kyle"].iloc[t] == pytest.approx(kyle_lambda(closes[t - W - 1:t + 1], volumes[t - W:t + 1]), rel=REL)

    def test_trailing_sigma_mode_uses_window_changes(self, random_series):
        result = compute_frame(random_series, FeatureConfig(lookback=W, bvc_sigma_mode=SigmaMode.TRAILING))
        closes = list(random_series.closes)
        volumes = list(random_series.volumes)
        assert result.bvc_sigma is None
        for t in (W, 77, len(closes) - 1):
            changes = [closes[tau] - closes[tau - 1] for tau in range(t - W + 1, t + 1)]
            expected = naive_vpin(closes, volumes, t, sample_sd(changes))
            assert result.frame["vpin"].iloc[t] == pytest.approx(expected, rel=REL)

    def test_leading_bars_are_missing(self, random_series):
        frame = compute_frame(random_series, FeatureConfig(lookback=W)).frame
        assert frame[["roll", "roll_impact", "amihud", "vpin"]].iloc[:W].isna().all().all()
        assert frame[["roll", "roll_impact", "amihud", "vpin"]].iloc[W].notna().all()
        assert frame["kyle"].iloc[:W + 1].isna().all()
        assert not np.isnan(frame["kyle"].iloc[W + 1])

    def test_global_sigma_is_recorded(self, random_series):
        result = compute_frame(random_series, FeatureConfig(lookback=W))
        closes = list(random_series.closes)
        expected = sample_sd([closes[i + 1] - closes[i] for i in range(len(closes) - 1)])
        assert result.bvc_sigma == pytest.approx(expected, rel=REL)
        assert result.bvc_sigma_mode is SigmaMode.GLOBAL

    def test_flat_prices_are_counted_in_diagnostics(self):
        bars = make_bar_series(np.full(48, 10.0), np.full(48, 100.0))
        result = compute_frame(bars, FeatureConfig(lookback=W))
        assert result.diagnostics["kyle_zero_denominator"] == 48 - W - 1
        assert result.frame["kyle"].isna().all()

    def test_feature_subset_limits_columns(self, random_series):
        result = compute_frame(random_series, FeatureConfig(lookback=W, feature_set=("roll", "vpin")))
        assert list(result.frame.columns) == ["bar_index", "roll", "vpin"]
        assert result.feature_names == ["roll", "vpin"]

    def test_too_short_series_raises(self):
        bars = make_bar_series(np.linspace(10, 11, W), np.full(W, 100.0))
        with pytest.raises(InsufficientDataError):
            compute_frame(bars, FeatureConfig(lookback=W))
