"""
Market measures (realized volatility, excess kurtosis), sign-of-change labels
and feature/label dataset assembly.
"""

import json
import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, InsufficientDataError
from .features import _windows, bar_returns
from .models import (
    CROSS_SUFFIX, BarSeries, Dataset, FeatureFrame, MeasureKind, MeasureSeries, TaskDescriptor,
)

logger = logging.getLogger(__name__)


def realized_volatility(returns: np.ndarray) -> float:
    """Sample standard deviation (ddof=1) of the window's returns."""
    returns = np.asarray(returns, dtype=float)
    if returns.size < 2 or np.isnan(returns).any():
        return float("nan")
    if np.ptp(returns) == 0:
        return 0.0
    return float(returns.std(ddof=1))


def excess_kurtosis(returns: np.ndarray) -> float:
    """Population excess kurtosis mu4 / sigma^4 - 3; NaN for a constant window."""
    returns = np.asarray(returns, dtype=float)
    if returns.size < 2 or np.isnan(returns).any() or np.ptp(returns) == 0:
        return float("nan")
    centered = returns - returns.mean()
    variance = (centered ** 2).mean()
    if variance == 0:
        return float("nan")
    return float((centered ** 4).mean() / variance ** 2 - 3.0)


def sign_label(measure: np.ndarray, t: int, h: int) -> Optional[int]:
    """+1 when the measure rises strictly over h bars, -1 otherwise; None if undefined."""
    if t + h >= len(measure):
        return None
    start, end = measure[t], measure[t + h]
    if np.isnan(start) or np.isnan(end):
        return None
    return 1 if end - start > 0 else -1


def sign_labels(measure: np.ndarray, h: int) -> np.ndarray:
    """Vectorized sign_label for every bar; 0 marks an undefined label."""
    measure = np.asarray(measure, dtype=float)
    labels = np.zeros(measure.size, dtype=np.int8)
    if measure.size <= h:
        return labels
    change = measure[h:] - measure[:-h]
    defined = ~np.isnan(change)
    labels[:-h][defined] = np.where(change[defined] > 0, 1, -1)
    return labels


def compute_measures(series: BarSeries, lookback: int = 50) -> MeasureSeries:
    """Realized volatility and excess kurtosis of bar returns at every bar."""
    n = len(series)
    W = lookback
    returns = bar_returns(series.closes)
    sigma = np.full(n, np.nan)
    kurt = np.full(n, np.nan)

    if n >= W + 1:
        windows = _windows(returns, W)[1:]  # first window contains the undefined r_0
        flat = np.ptp(windows, axis=1) == 0
        with np.errstate(invalid="ignore", divide="ignore"):
            sd = windows.std(axis=1, ddof=1)
            centered = windows - windows.mean(axis=1, keepdims=True)
            variance = (centered ** 2).mean(axis=1)
            k = (centered ** 4).mean(axis=1) / variance ** 2 - 3.0
        sigma[W:] = np.where(flat, 0.0, sd)
        kurt[W:] = np.where(flat | (variance == 0), np.nan, k)

    frame = pd.DataFrame({
        "bar_index": series.frame["bar_index"].to_numpy(),
        "slot_start": series.frame["slot_start"].array,
        "sigma": sigma,
        "kurt": kurt,
    })
    return MeasureSeries(symbol=series.symbol, frame=frame, lookback=W)


def _feature_block(frame: FeatureFrame, names: Sequence[str]) -> np.ndarray:
    missing = [n for n in names if n not in frame.frame.columns]
    if missing:
        raise DataError(f"{frame.symbol}: feature frame lacks {missing}")
    return frame.frame[list(names)].to_numpy(dtype=float)


def assemble(
    target: FeatureFrame,
    target_measures: MeasureSeries,
    measure_kind: MeasureKind,
    horizon: int = 50,
    cross: Optional[FeatureFrame] = None,
    min_rows: int = 200,
    feature_set: Optional[Sequence[str]] = None,
) -> Dataset:
    """One row per bar t with every feature at t and a defined label for t+h."""
    if cross is not None and cross.symbol == target.symbol:
        raise DataError(f"Cannot pair {target.symbol} with itself as cross firm")

    names = list(feature_set) if feature_set is not None else target.feature_names
    bar_index = target.frame["bar_index"].to_numpy()
    if not np.array_equal(bar_index, target_measures.frame["bar_index"].to_numpy()):
        raise DataError(f"{target.symbol}: features and measures are not on the same grid")

    blocks = [_feature_block(target, names)]
    feature_names = list(names)
    if cross is not None:
        if not np.array_equal(bar_index, cross.frame["bar_index"].to_numpy()):
            raise DataError(f"{cross.symbol} and {target.symbol} are not on the same grid")
        blocks.append(_feature_block(cross, names))
        feature_names += [f"{name}{CROSS_SUFFIX}" for name in names]
    X_all = np.hstack(blocks)

    labels = sign_labels(target_measures.values(measure_kind), horizon)
    features_ok = ~np.isnan(X_all).any(axis=1)
    label_ok = labels != 0
    rows = np.flatnonzero(features_ok & label_ok)

    drop_counts = {
        "bars": int(len(bar_index)),
        "missing_features": int((~features_ok).sum()),
        "missing_label": int((features_ok & ~label_ok).sum()),
        "rows": int(rows.size),
    }
    task = TaskDescriptor(
        target=target.symbol,
        cross=cross.symbol if cross is not None else None,
        measure=measure_kind,
        horizon=horizon,
        lookback=target.lookback,
        bvc_sigma_mode=target.bvc_sigma_mode.value,
    )
    if rows.size < min_rows:
        raise InsufficientDataError(
            f"{target.symbol}{' x ' + cross.symbol if cross is not None else ''}: "
            f"only {rows.size} usable rows, need {min_rows}"
        )

    timestamps = pd.DatetimeIndex(target_measures.frame["slot_start"].iloc[rows])

    logger.debug(f"Assembled {task.target} ({task.measure.value}, cross={task.cross}): {drop_counts}")
    return Dataset(
        bar_index=bar_index[rows],
        timestamps=timestamps,
        X=X_all[rows],
        y=labels[rows].astype(np.int8),
        feature_names=tuple(feature_names),
        task=task,
        drop_counts=drop_counts,
    )


def read_dataset(csv_path: str, sidecar_path: Optional[str] = None) -> Dataset:
    """Load a dataset written by CSVExporter.export_dataset."""
    df = pd.read_csv(csv_path)
    task_info = {}
    drop_counts = {}
    if sidecar_path:
        with open(sidecar_path, "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        task_info = sidecar.get("task", {})
        drop_counts = sidecar.get("drop_counts", {})
    feature_names = [c for c in df.columns if c not in ("bar_index", "timestamp", "label")]
    task = TaskDescriptor(
        target=task_info.get("target", ""),
        cross=task_info.get("cross"),
        measure=MeasureKind(task_info.get("measure", MeasureKind.VOLATILITY.value)),
        horizon=int(task_info.get("horizon", 50)),
        lookback=int(task_info.get("lookback", 50)),
        bvc_sigma_mode=task_info.get("bvc_sigma_mode", "global"),
    )
    return Dataset(
        bar_index=df["bar_index"].to_numpy(dtype=int),
        timestamps=pd.DatetimeIndex(pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")),
        X=df[feature_names].to_numpy(dtype=float),
        y=df["label"].to_numpy(dtype=np.int8),
        feature_names=tuple(feature_names),
        task=task,
        drop_counts=drop_counts,
    )
