"""
Microstructure variables computed over a trailing lookback window of W bars.

Scalar functions take one window and are the reference definitions;
compute_frame evaluates the same expressions for every bar at once with
sliding windows. Missing inputs yield NaN.
"""

import json
import logging
import os
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import norm

from .exceptions import InsufficientDataError
from .models import FEATURE_NAMES, BarSeries, FeatureConfig, FeatureFrame, MeasureSeries, SigmaMode

logger = logging.getLogger(__name__)


def _lag_covariance(a: np.ndarray, b: np.ndarray, axis: int = -1) -> np.ndarray:
    """Population covariance of paired vectors, each demeaned."""
    da = a - a.mean(axis=axis, keepdims=True)
    db = b - b.mean(axis=axis, keepdims=True)
    return (da * db).mean(axis=axis)


def roll_measure(closes: np.ndarray) -> float:
    """Roll measure from W+1 closes: 2 * sqrt(|lag-1 covariance of price changes|)."""
    closes = np.asarray(closes, dtype=float)
    if closes.size < 3 or np.isnan(closes).any():
        return float("nan")
    dp = np.diff(closes)
    cov = _lag_covariance(dp[1:], dp[:-1])
    return float(2.0 * np.sqrt(abs(cov)))


def roll_impact(roll: float, dollar_volume: float) -> float:
    """Roll measure per dollar traded in the current bar."""
    if np.isnan(roll) or np.isnan(dollar_volume) or dollar_volume == 0:
        return float("nan")
    return float(roll / dollar_volume)


def kyle_lambda(closes: np.ndarray, volumes: np.ndarray) -> float:
    """Kyle's lambda at bar t.

    closes covers bars t-W-1..t (W+2 values), volumes covers t-W..t (W+1 values).
    Returns NaN when the signed-volume denominator is zero.
    """
    closes = np.asarray(closes, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if closes.size != volumes.size + 1:
        raise ValueError(f"kyle_lambda needs one more close than volumes, got {closes.size} and {volumes.size}")
    if np.isnan(closes).any() or np.isnan(volumes).any():
        return float("nan")
    signs = np.sign(np.diff(closes))
    denominator = float((signs * volumes).sum())
    if denominator == 0:
        return float("nan")
    return float((closes[-1] - closes[1]) / denominator)


def amihud_lambda(abs_returns: np.ndarray, dollar_volumes: np.ndarray) -> float:
    """Mean of |r| / dollar volume over the window."""
    abs_returns = np.abs(np.asarray(abs_returns, dtype=float))
    dollar_volumes = np.asarray(dollar_volumes, dtype=float)
    if np.isnan(abs_returns).any() or np.isnan(dollar_volumes).any() or (dollar_volumes == 0).any():
        return float("nan")
    return float((abs_returns / dollar_volumes).mean())


def bvc_buy_volume(delta_p, sigma, volume, epsilon_sigma: float = 1e-12):
    """Bulk volume classification: V * Phi(delta_p / sigma). Works elementwise on arrays."""
    scale = np.maximum(sigma, epsilon_sigma)
    result = volume * norm.cdf(np.asarray(delta_p, dtype=float) / scale)
    if np.ndim(result) == 0:
        return float(result)
    return result


def vpin(volumes: np.ndarray, buy_volumes: np.ndarray) -> float:
    """Mean order-flow imbalance |V_sell - V_buy| / V over the window."""
    volumes = np.asarray(volumes, dtype=float)
    buy_volumes = np.asarray(buy_volumes, dtype=float)
    if np.isnan(volumes).any() or np.isnan(buy_volumes).any() or (volumes == 0).any():
        return float("nan")
    sell_volumes = volumes - buy_volumes
    return float((np.abs(sell_volumes - buy_volumes) / volumes).mean())


def bar_returns(closes: np.ndarray) -> np.ndarray:
    """Simple returns of bar closes; the first bar has none."""
    closes = np.asarray(closes, dtype=float)
    returns = np.full(closes.shape, np.nan)
    returns[1:] = closes[1:] / closes[:-1] - 1.0
    return returns


def price_change_sigma(closes: np.ndarray) -> float:
    """Sample standard deviation of bar price changes over the whole series."""
    dp = np.diff(np.asarray(closes, dtype=float))
    dp = dp[~np.isnan(dp)]
    if dp.size < 2:
        return float("nan")
    return float(dp.std(ddof=1))


def _windows(values: np.ndarray, width: int) -> np.ndarray:
    if values.size < width:
        return np.empty((0, width))
    return sliding_window_view(values, width)


def compute_frame(series: BarSeries, cfg: FeatureConfig = FeatureConfig()) -> FeatureFrame:
    """Compute the microstructure variables at every bar of one firm."""
    W = cfg.lookback
    n = len(series)
    if n < W + 1:
        raise InsufficientDataError(
            f"{series.symbol}: {n} bars is too short for lookback {W}; need at least {W + 1}"
        )

    closes = series.closes
    volumes = series.volumes
    dollar = series.dollar_volumes
    dp = np.diff(closes)  # dp[j] is the change into bar j+1

    columns: Dict[str, np.ndarray] = {name: np.full(n, np.nan) for name in FEATURE_NAMES}

    # Roll over W changes ending at t; windows of dp start at t-W
    dp_win = _windows(dp, W)
    cov = _lag_covariance(dp_win[:, 1:], dp_win[:, :-1], axis=1)
    columns["roll"][W:] = 2.0 * np.sqrt(np.abs(cov))

    with np.errstate(divide="ignore", invalid="ignore"):
        columns["roll_impact"] = np.where(dollar > 0, columns["roll"] / dollar, np.nan)

    # Kyle: W+1 signed volumes ending at t, first defined at t = W+1
    signed = np.sign(dp) * volumes[1:]
    kyle_zero = 0
    if n >= W + 2:
        denominator = _windows(signed, W + 1).sum(axis=1)
        numerator = closes[W + 1:] - closes[1:n - W]
        kyle_zero = int((denominator == 0).sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            columns["kyle"][W + 1:] = np.where(denominator != 0, numerator / denominator, np.nan)

    # Amihud over returns t-W+1..t
    returns = bar_returns(closes)
    with np.errstate(divide="ignore", invalid="ignore"):
        illiquidity = np.where(dollar != 0, np.abs(returns) / dollar, np.nan)
    columns["amihud"][W - 1:] = _windows(illiquidity, W).mean(axis=1)
    columns["amihud"][:W] = np.nan

    # VPIN over bars t-W+1..t
    vol_win = _windows(volumes[1:], W)
    if cfg.bvc_sigma_mode is SigmaMode.GLOBAL:
        sigma: Optional[float] = price_change_sigma(closes)
        scale = sigma
    else:
        sigma = None
        scale = dp_win.std(axis=1, ddof=1)[:, None]
    buy = bvc_buy_volume(dp_win, scale, vol_win, cfg.epsilon_sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        imbalance = np.abs((vol_win - buy) - buy) / vol_win
    imbalance = np.where(vol_win == 0, np.nan, imbalance)
    columns["vpin"][W:] = imbalance.mean(axis=1)

    frame = pd.DataFrame({"bar_index": series.frame["bar_index"].to_numpy()})
    for name in cfg.feature_set:
        frame[name] = columns[name]

    diagnostics = {"kyle_zero_denominator": kyle_zero}
    for name in cfg.feature_set:
        diagnostics[f"missing_{name}"] = int(np.isnan(columns[name][W:]).sum())
    if kyle_zero:
        logger.debug(f"{series.symbol}: Kyle's lambda undefined (zero signed volume) at {kyle_zero} bars")

    return FeatureFrame(
        symbol=series.symbol,
        frame=frame,
        lookback=W,
        bvc_sigma=sigma,
        bvc_sigma_mode=cfg.bvc_sigma_mode,
        diagnostics=diagnostics,
    )


def read_features_csv(
    path: str,
    timezone: str = "America/New_York",
) -> Tuple[Dict[str, FeatureFrame], Dict[str, MeasureSeries]]:
    """Load features and measures written by CSVExporter.export_features."""
    df = pd.read_csv(path, dtype={"symbol": str})
    df["slot_start"] = pd.to_datetime(df["slot_start"], utc=True, format="ISO8601").dt.tz_convert(timezone)

    sidecar: Dict[str, dict] = {}
    sidecar_path = os.path.splitext(path)[0] + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path, "r", encoding="utf-8") as f:
            sidecar = json.load(f)

    names = [c for c in df.columns if c in FEATURE_NAMES]
    features: Dict[str, FeatureFrame] = {}
    measures: Dict[str, MeasureSeries] = {}
    for symbol, group in df.groupby("symbol", sort=True):
        group = group.sort_values("bar_index").reset_index(drop=True)
        info = sidecar.get(symbol, {})
        lookback = int(info.get("lookback", FeatureConfig().lookback))
        features[symbol] = FeatureFrame(
            symbol=symbol,
            frame=group[["bar_index"] + names].copy(),
            lookback=lookback,
            bvc_sigma=info.get("bvc_sigma"),
            bvc_sigma_mode=SigmaMode(info.get("bvc_sigma_mode", SigmaMode.GLOBAL.value)),
            diagnostics=info.get("diagnostics", {}),
        )
        measures[symbol] = MeasureSeries(
            symbol=symbol,
            frame=group[["bar_index", "slot_start", "sigma", "kurt"]].copy(),
            lookback=lookback,
        )
    logger.info(f"Loaded features for {len(features)} symbols from {path}")
    return features, measures
