"""Tests for trade ingestion, filtering and bar aggregation."""

from datetime import date, time, timedelta

import numpy as np
import pandas as pd
import pytest

from hftnet.bars import (
    aggregate, build_bar_series, build_grid, fill_policy, filter_trades, load_trades, screen_liquidity,
    trades_to_frame,
)
from hftnet.exceptions import GridError, IngestionError
from hftnet.models import FillPolicy, FilterRules, SessionGrid, Trade

from conftest import make_bar_series

TZ = "America/New_York"


def ts(text: str) -> pd.Timestamp:
    return pd.Timestamp(text, tz=TZ)


def trade(clock: str, price: float = 10.0, volume: float = 100.0, corr=None, suffix=None, symbol="AAA") -> Trade:
    return Trade(symbol=symbol, timestamp=ts(f"2018-01-02 {clock}"), price=price, volume=volume,
                 correction_flag=corr, symbol_suffix=suffix)


class TestSessionGrid:

    def test_default_grid_has_twelve_bars_per_day(self):
        grid = SessionGrid(trading_days=(date(2018, 1, 2), date(2018, 1, 3)))
        assert grid.raw_slots_per_day == 13
        assert grid.slots_per_day == 12
        assert grid.n_bars == 24

    def test_first_bar_starts_after_removed_opening_slot(self):
        grid = SessionGrid(trading_days=(date(2018, 1, 2), date(2018, 1, 3)))
        assert grid.slot_start(0) == ts("2018-01-02 10:00")
        assert grid.slot_start(11) == ts("2018-01-02 15:30")
        assert grid.slot_start(12) == ts("2018-01-03 10:00")

    def test_session_not_divisible_by_bar_width_is_rejected(self):
        trades = trades_to_frame([trade("10:00")])
        with pytest.raises(GridError):
            build_grid(trades, bar_width=timedelta(minutes=45))

    def test_grid_days_can_be_restricted(self):
        trades = trades_to_frame([
            trade("10:00"),
            Trade("AAA", ts("2018-01-03 10:00"), 10.0, 100.0),
            Trade("AAA", ts("2018-01-04 10:00"), 10.0, 100.0),
        ])
        grid = build_grid(trades, start=date(2018, 1, 3))
        assert grid.trading_days == (date(2018, 1, 3), date(2018, 1, 4))


class TestFilterTrades:

    def test_each_trade_is_counted_under_its_first_failing_rule(self):
        raw = trades_to_frame([
            trade("10:05"),
            trade("10:06", price=0.0),
            trade("09:00"),
            trade("10:07", suffix="F"),
            trade("10:08", corr="12"),
            trade("09:01", price=-1.0),
        ])
        filtered, report = filter_trades(raw)
        assert len(filtered) == 1
        assert report.total_in == 6
        assert report.total_out == 1
        assert report.dropped == {
            "positive_price_volume": 2,
            "market_hours": 1,
            "blank_suffix": 1,
            "correction_zero": 1,
        }

    def test_correction_code_zero_is_kept(self):
        raw = trades_to_frame([trade("10:05", corr="00"), trade("10:06", corr="0")])
        filtered, report = filter_trades(raw)
        assert len(filtered) == 1
        assert report.dropped["correction_zero"] == 1

    def test_disabled_rules_drop_nothing(self):
        raw = trades_to_frame([trade("09:00"), trade("10:07", suffix="F")])
        rules = FilterRules(market_hours=False, blank_suffix=False)
        filtered, report = filter_trades(raw, rules)
        assert len(filtered) == 2
        assert "market_hours" not in report.dropped

    def test_session_close_is_exclusive(self):
        raw = trades_to_frame([trade("15:59:59"), trade("16:00")])
        filtered, _ = filter_trades(raw)
        assert list(filtered["timestamp"]) == [ts("2018-01-02 15:59:59")]


class TestAggregate:

    @pytest.fixture
    def trades(self):
        return trades_to_frame([
            trade("09:45", price=9.0, volume=50),
            trade("10:00", price=10.0, volume=100),
            trade("10:10", price=10.5, volume=200),
            trade("10:29:59", price=10.2, volume=300),
            trade("10:30", price=11.0, volume=400),
        ])

    def test_bars_are_half_open_and_opening_slot_is_removed(self, trades):
        grid = build_grid(trades)
        bars = aggregate(trades, grid, "AAA")
        first = bars.bar(0)
        assert first.open == 10.0
        assert first.close == 10.2
        assert first.volume == 600
        assert first.dollar_volume == pytest.approx(10.0 * 100 + 10.5 * 200 + 10.2 * 300)
        assert first.trade_count == 3
        second = bars.bar(1)
        assert second.trade_count == 1
        assert second.open == second.close == 11.0
        assert int(bars.frame["trade_count"].sum()) == 4
        assert len(bars) == 12

    def test_empty_bars_forward_fill_the_prior_close(self, trades):
        grid = build_grid(trades)
        bars = fill_policy(aggregate(trades, grid, "AAA"), FillPolicy.FORWARD_FILL_CLOSE)
        later = bars.frame.iloc[2:]
        assert later["is_empty"].all()
        assert (later["close"] == 11.0).all()
        assert (later["volume"] == 0).all()

    def test_no_fill_leaves_empty_bars_missing(self, trades):
        grid = build_grid(trades)
        bars = fill_policy(aggregate(trades, grid, "AAA"), FillPolicy.NONE)
        assert bars.frame["close"].iloc[2:].isna().all()

    def test_trades_outside_the_session_are_not_aggregated(self):
        trades = trades_to_frame([trade("10:00"), trade("16:00"), trade("08:00")])
        grid = build_grid(trades)
        bars = aggregate(trades, grid, "AAA")
        assert int(bars.frame["trade_count"].sum()) == 1

    def test_day_volume_is_conserved_after_the_opening_slot(self, synthetic_market):
        trades, _ = filter_trades(load_trades(synthetic_market["trades"]))
        series = build_bar_series(trades, build_grid(trades))
        local = trades["timestamp"].dt.tz_convert(TZ)
        kept = pd.DataFrame({"symbol": trades["symbol"], "day": local.dt.date, "volume": trades["volume"]})
        expected = kept[local.dt.time >= time(10, 0)].groupby(["symbol", "day"])["volume"].sum()
        for symbol, bars in series.items():
            per_day = bars.frame.groupby("date")["volume"].sum()
            for day, volume in per_day.items():
                assert volume == expected[(symbol, day)]

    def test_trade_on_unknown_day_raises(self):
        trades = trades_to_frame([trade("10:00")])
        grid = SessionGrid(trading_days=(date(2018, 1, 3),))
        with pytest.raises(GridError):
            aggregate(trades, grid, "AAA")


class TestLoadTrades:

    def test_offsets_are_converted_and_naive_times_localized(self, tmp_path):
        path = tmp_path / "trades.csv"
        path.write_text(
            "symbol,timestamp,price,volume,corr,suffix\n"
            "AAA,2018-01-02T15:00:00+00:00,10.0,100,00,\n"
            "AAA,2018-01-02 10:30:00,10.5,200,00,\n"
        )
        trades = load_trades(str(path), tz=TZ)
        assert list(trades["timestamp"]) == [ts("2018-01-02 10:00"), ts("2018-01-02 10:30")]
        assert trades["price"].tolist() == [10.0, 10.5]

    def test_unparseable_timestamp_reports_file_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "symbol,timestamp,price,volume\n"
            "AAA,2018-01-02 10:00:00,10.0,100\n"
            "AAA,2018-01-02 10:01:00,10.0,100\n"
            "AAA,not-a-time,10.0,100\n"
        )
        with pytest.raises(IngestionError) as excinfo:
            load_trades(str(path))
        assert excinfo.value.line == 4

    def test_missing_columns_are_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("symbol,price,volume\nAAA,10.0,100\n")
        with pytest.raises(IngestionError):
            load_trades(str(path))

    def test_equal_timestamps_keep_input_order(self, tmp_path):
        path = tmp_path / "ties.csv"
        path.write_text(
            "symbol,timestamp,price,volume\n"
            "BBB,2018-01-02 10:00:00,20.0,100\n"
            "AAA,2018-01-02 10:00:00,10.3,100\n"
            "AAA,2018-01-02 10:00:00,10.1,100\n"
            "AAA,2018-01-02 10:00:00,10.2,100\n"
        )
        trades = load_trades(str(path))
        assert trades["symbol"].tolist() == ["AAA", "AAA", "AAA", "BBB"]
        assert trades["price"].tolist() == [10.3, 10.1, 10.2, 20.0]


class TestScreenLiquidity:

    def test_quarter_of_sparse_bars_excludes_the_firm(self):
        bars = make_bar_series(np.ones(4), np.ones(4), trade_counts=[5, 5, 5, 4])
        keep, fraction = screen_liquidity(bars, min_trades_per_bar=5, max_sparse_fraction=0.25)
        assert not keep
        assert fraction == 0.25

    def test_below_threshold_is_kept(self):
        bars = make_bar_series(np.ones(8), np.ones(8), trade_counts=[5, 5, 5, 5, 5, 5, 5, 4])
        keep, fraction = screen_liquidity(bars)
        assert keep
        assert fraction == 0.125


def test_session_times_from_trades_frame_are_exchange_local():
    raw = trades_to_frame([trade("10:05")])
    filtered, _ = filter_trades(raw, session_open=time(10, 0), session_close=time(10, 30))
    assert len(filtered) == 1
