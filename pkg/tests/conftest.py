"""Shared fixtures: hand-built bar series and small synthetic markets."""

import math

import numpy as np
import pandas as pd
import pytest

from hftnet.models import BarSeries, FeatureConfig, Influence, SessionGrid, SynthConfig
from hftnet.synth import generate


def make_bar_series(closes, volumes, symbol="AAA", dollar_volumes=None, trade_counts=None) -> BarSeries:
    """BarSeries on a 12-bars-per-day grid starting 2018-01-02, one row per close."""
    closes = np.asarray(closes, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    n = closes.size
    days = pd.bdate_range("2018-01-02", periods=max(1, math.ceil(n / 12))).date
    grid = SessionGrid(trading_days=tuple(days))
    starts = grid.slot_starts()[:n]
    frame = pd.DataFrame({
        "bar_index": np.arange(n),
        "date": [ts.date() for ts in starts],
        "slot_start": starts,
        "open": closes,
        "close": closes,
        "volume": volumes,
        "dollar_volume": closes * volumes if dollar_volumes is None else np.asarray(dollar_volumes, dtype=float),
        "trade_count": np.full(n, 20) if trade_counts is None else np.asarray(trade_counts),
        "is_empty": np.zeros(n, dtype=bool) if trade_counts is None else np.asarray(trade_counts) == 0,
    })
    return BarSeries(symbol=symbol, grid=grid, frame=frame)


def random_walk_series(seed: int, n: int = 240, symbol: str = "AAA") -> BarSeries:
    rng = np.random.default_rng(seed)
    closes = 50.0 + np.cumsum(rng.normal(0.0, 0.1, size=n))
    volumes = rng.uniform(100.0, 1000.0, size=n)
    return make_bar_series(closes, volumes, symbol=symbol)


@pytest.fixture
def random_series():
    return random_walk_series(3)


@pytest.fixture
def small_feature_config():
    return FeatureConfig(lookback=20)


@pytest.fixture(scope="session")
def synthetic_market(tmp_path_factory):
    """Three firms, 30 days, SYN00 leading SYN01; files written once per session."""
    cfg = SynthConfig(
        n_firms=3,
        days=30,
        influences=[Influence(source=0, target=1, lag=5, strength=0.9)],
        seed=11,
    )
    output_dir = tmp_path_factory.mktemp("synthetic_market")
    paths = generate(cfg, str(output_dir))
    return {"config": cfg, "dir": str(output_dir), **paths}
