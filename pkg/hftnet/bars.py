"""
Trade ingestion, filtering and 30-minute time-bar aggregation.

All firms are aggregated onto one SessionGrid so bar_index k denotes the same
wall-clock interval for every symbol. Bars are half-open [start, start + width).
"""

import logging
import re
from datetime import date, time, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .exceptions import GridError, IngestionError
from .models import BarSeries, FillPolicy, FilterReport, FilterRules, SessionGrid, Trade

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("symbol", "timestamp", "price", "volume")
OPTIONAL_COLUMNS = ("corr", "suffix")
BAR_COLUMNS = [
    "bar_index", "date", "slot_start", "open", "close",
    "volume", "dollar_volume", "trade_count", "is_empty",
]
_OFFSET_RE = re.compile(r"(Z|[+-]\d{2}:?\d{2})$")


def trades_to_frame(trades: Iterable[Trade]) -> pd.DataFrame:
    """Tabular view of Trade records, in input order."""
    rows = [
        {
            "symbol": t.symbol,
            "timestamp": pd.Timestamp(t.timestamp),
            "price": float(t.price),
            "volume": float(t.volume),
            "corr": t.correction_flag or "",
            "suffix": t.symbol_suffix or "",
        }
        for t in trades
    ]
    df = pd.DataFrame(rows, columns=["symbol", "timestamp", "price", "volume", "corr", "suffix"])
    df["_line"] = np.arange(len(df)) + 2
    return df


def _parse_timestamps(raw: pd.Series, tz: str) -> pd.Series:
    """Parse ISO-8601 strings; offset-aware ones are converted, naive ones localized to tz."""
    text = raw.astype(str).str.strip()
    has_offset = text.str.contains(_OFFSET_RE)
    parsed = pd.Series(pd.NaT, index=text.index, dtype=f"datetime64[ns, {tz}]")

    if has_offset.any():
        aware = pd.to_datetime(text[has_offset], utc=True, errors="coerce", format="ISO8601")
        parsed.loc[has_offset] = aware.dt.tz_convert(tz)
    if (~has_offset).any():
        naive = pd.to_datetime(text[~has_offset], errors="coerce", format="ISO8601")
        parsed.loc[~has_offset] = naive.dt.tz_localize(tz, ambiguous="NaT", nonexistent="NaT")
    return parsed


def load_trades(paths: Union[str, Sequence[str]], tz: str = "America/New_York") -> pd.DataFrame:
    """Read TAQ-like trade CSVs into one frame sorted stably by (symbol, timestamp).

    Columns: symbol, timestamp (exchange-local, tz-aware), price, volume,
    corr, suffix, _line (1-based source line).
    """
    if isinstance(paths, str):
        paths = [paths]

    frames = []
    for path in paths:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        df.columns = [c.strip().lower() for c in df.columns]
        missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
        if missing:
            raise IngestionError(f"missing required columns {missing}", path=path)
        for column in OPTIONAL_COLUMNS:
            if column not in df.columns:
                df[column] = ""

        df["_line"] = np.arange(len(df)) + 2
        df["timestamp"] = _parse_timestamps(df["timestamp"], tz)
        bad = df["timestamp"].isna()
        if bad.any():
            first = df.loc[bad].iloc[0]
            raise IngestionError(f"unparseable timestamp {first['timestamp']!r}", line=int(first["_line"]), path=path)

        for column in ("price", "volume"):
            values = pd.to_numeric(df[column], errors="coerce")
            if values.isna().any():
                first_line = int(df.loc[values.isna(), "_line"].iloc[0])
                raise IngestionError(f"non-numeric {column}", line=first_line, path=path)
            df[column] = values.astype(float)

        df["symbol"] = df["symbol"].str.strip()
        df["corr"] = df["corr"].str.strip()
        df["suffix"] = df["suffix"].str.strip()
        frames.append(df[["symbol", "timestamp", "price", "volume", "corr", "suffix", "_line"]])
        logger.info(f"Loaded {len(df)} trades from {path}")

    trades = pd.concat(frames, ignore_index=True)
    trades["_ns"] = trades["timestamp"].astype("int64")
    trades = trades.sort_values(["symbol", "_ns"], kind="stable").reset_index(drop=True)
    return trades


def _time_of_day(timestamps: pd.Series) -> pd.Series:
    return timestamps - timestamps.dt.normalize()


def _as_delta(t: time) -> pd.Timedelta:
    return pd.Timedelta(hours=t.hour, minutes=t.minute, seconds=t.second)


def filter_trades(
    raw: pd.DataFrame,
    rules: FilterRules = FilterRules(),
    session_open: time = time(9, 30),
    session_close: time = time(16, 0),
) -> Tuple[pd.DataFrame, FilterReport]:
    """Apply the trade filters in order; a trade is counted under the first rule it fails."""
    report = FilterReport(total_in=len(raw))
    keep = pd.Series(True, index=raw.index)

    checks = []
    if rules.positive_price_volume:
        checks.append(("positive_price_volume", (raw["price"] > 0) & (raw["volume"] > 0)))
    if rules.market_hours:
        tod = _time_of_day(raw["timestamp"])
        checks.append(("market_hours", (tod >= _as_delta(session_open)) & (tod < _as_delta(session_close))))
    if rules.blank_suffix and "suffix" in raw.columns:
        checks.append(("blank_suffix", raw["suffix"].fillna("") == ""))
    if rules.correction_zero and "corr" in raw.columns:
        corr = raw["corr"].fillna("")
        checks.append(("correction_zero", (corr == "") | (corr == "00")))

    for name, passes in checks:
        failing = keep & ~passes
        report.dropped[name] = int(failing.sum())
        keep &= passes

    filtered = raw.loc[keep].reset_index(drop=True)
    dropped = {k: v for k, v in report.dropped.items() if v}
    logger.info(f"Filtered trades: {report.total_in} in, {len(filtered)} kept, dropped {dropped or 'none'}")
    return filtered, report


def build_grid(
    trades: pd.DataFrame,
    session_open: time = time(9, 30),
    session_close: time = time(16, 0),
    bar_width: timedelta = timedelta(minutes=30),
    drop_first_bar: bool = True,
    timezone: str = "America/New_York",
    start: Optional[date] = None,
    end: Optional[date] = None,
) -> SessionGrid:
    """Session grid whose trading days are the local dates seen across all symbols."""
    local = trades["timestamp"].dt.tz_convert(timezone)
    days = sorted(set(local.dt.date))
    if start is not None:
        days = [d for d in days if d >= start]
    if end is not None:
        days = [d for d in days if d <= end]
    grid = SessionGrid(
        trading_days=tuple(days),
        session_open=session_open,
        session_close=session_close,
        bar_width=bar_width,
        drop_first_bar=drop_first_bar,
        timezone=timezone,
    )
    if grid.raw_slots_per_day * grid.bar_width != (_as_delta(session_close) - _as_delta(session_open)):
        raise GridError("session length is not a whole number of bars")
    return grid


def _empty_bar_frame(grid: SessionGrid) -> pd.DataFrame:
    starts = grid.slot_starts()
    return pd.DataFrame({
        "bar_index": np.arange(grid.n_bars, dtype=int),
        "date": [ts.date() for ts in starts],
        "slot_start": starts,
    })


def aggregate(trades: pd.DataFrame, grid: SessionGrid, symbol: Optional[str] = None) -> BarSeries:
    """Aggregate one symbol's filtered trades into bars on the grid."""
    if symbol is None:
        symbols = trades["symbol"].unique() if "symbol" in trades.columns else []
        symbol = str(symbols[0]) if len(symbols) else ""

    base = _empty_bar_frame(grid)
    if trades.empty:
        return _finish_bars(symbol, grid, base, pd.DataFrame())

    local = trades["timestamp"].dt.tz_convert(grid.timezone)
    order = np.argsort(local.astype("int64").to_numpy(), kind="stable")
    trades = trades.iloc[order]
    local = local.iloc[order]

    day_lookup = {d: i for i, d in enumerate(grid.trading_days)}
    dates = local.dt.date
    unknown = sorted(set(dates) - set(day_lookup))
    if unknown:
        raise GridError(f"{symbol}: trades on {unknown[0].isoformat()} which is not a grid trading day")

    offset = _time_of_day(local) - _as_delta(grid.session_open)
    session_len = grid.raw_slots_per_day * grid.bar_width
    inside = (offset >= pd.Timedelta(0)) & (offset < session_len)
    if (~inside).any():
        logger.warning(f"{symbol}: {int((~inside).sum())} trades outside session hours excluded from bars")

    slot = (offset // grid.bar_width).where(inside, -1).astype(int)
    kept = inside & (slot >= grid.first_slot)
    excised = int((inside & (slot < grid.first_slot)).sum())
    if excised:
        logger.debug(f"{symbol}: {excised} trades in removed opening bars")

    day_idx = dates.map(day_lookup).astype(int)
    work = pd.DataFrame({
        "bar_index": (day_idx * grid.slots_per_day + slot - grid.first_slot)[kept].to_numpy(),
        "price": trades["price"].to_numpy()[kept.to_numpy()],
        "volume": trades["volume"].to_numpy()[kept.to_numpy()],
    })
    work["dollar"] = work["price"] * work["volume"]
    grouped = work.groupby("bar_index", sort=True).agg(
        open=("price", "first"),
        close=("price", "last"),
        volume=("volume", "sum"),
        dollar_volume=("dollar", "sum"),
        trade_count=("price", "size"),
    )
    return _finish_bars(symbol, grid, base, grouped)


def _finish_bars(symbol: str, grid: SessionGrid, base: pd.DataFrame, grouped: pd.DataFrame) -> BarSeries:
    frame = base.copy()
    for column in ("open", "close"):
        frame[column] = grouped[column].reindex(frame["bar_index"]).to_numpy() if len(grouped) else np.nan
    for column in ("volume", "dollar_volume"):
        values = grouped[column].reindex(frame["bar_index"]).to_numpy() if len(grouped) else np.nan
        frame[column] = np.nan_to_num(np.asarray(values, dtype=float), nan=0.0)
    counts = grouped["trade_count"].reindex(frame["bar_index"]).to_numpy() if len(grouped) else np.nan
    frame["trade_count"] = np.nan_to_num(np.asarray(counts, dtype=float), nan=0.0).astype(int)
    frame["is_empty"] = frame["trade_count"] == 0
    return BarSeries(symbol=symbol, grid=grid, frame=frame[BAR_COLUMNS])


def fill_policy(series: BarSeries, policy: FillPolicy = FillPolicy.FORWARD_FILL_CLOSE) -> BarSeries:
    """Forward-fill empty bars from the prior close, or leave them missing."""
    if policy is FillPolicy.NONE or not series.frame["is_empty"].any():
        return series
    frame = series.frame.copy()
    filled_close = frame["close"].ffill()
    empty = frame["is_empty"]
    frame.loc[empty, "close"] = filled_close[empty]
    frame.loc[empty, "open"] = filled_close[empty]
    frame.loc[empty, "volume"] = 0.0
    frame.loc[empty, "dollar_volume"] = 0.0
    return BarSeries(symbol=series.symbol, grid=series.grid, frame=frame)


def screen_liquidity(
    series: BarSeries,
    min_trades_per_bar: int = 5,
    max_sparse_fraction: float = 0.25,
) -> Tuple[bool, float]:
    """A firm is kept unless max_sparse_fraction or more of its bars have too few trades."""
    if len(series) == 0:
        return False, 1.0
    sparse_fraction = float((series.frame["trade_count"] < min_trades_per_bar).mean())
    return sparse_fraction < max_sparse_fraction, sparse_fraction


def build_bar_series(
    trades: pd.DataFrame,
    grid: SessionGrid,
    policy: FillPolicy = FillPolicy.FORWARD_FILL_CLOSE,
    jobs: int = 1,
) -> Dict[str, BarSeries]:
    """Aggregate every symbol in the trade frame; symbols are independent."""
    symbols = sorted(trades["symbol"].unique())
    groups = [trades.loc[trades["symbol"] == s] for s in symbols]

    def _one(symbol: str, symbol_trades: pd.DataFrame) -> BarSeries:
        return fill_policy(aggregate(symbol_trades, grid, symbol=symbol), policy)

    results = Parallel(n_jobs=jobs)(delayed(_one)(s, g) for s, g in zip(symbols, groups))
    return dict(zip(symbols, results))


def read_bars_csv(
    path: str,
    session_open: time = time(9, 30),
    session_close: time = time(16, 0),
    bar_width: timedelta = timedelta(minutes=30),
    drop_first_bar: bool = True,
    timezone: str = "America/New_York",
) -> Dict[str, BarSeries]:
    """Load bars written by CSVExporter.export_bars back into BarSeries on a shared grid."""
    df = pd.read_csv(path, dtype={"symbol": str})
    df["slot_start"] = pd.to_datetime(df["slot_start"], utc=True, format="ISO8601").dt.tz_convert(timezone)
    df["date"] = pd.to_datetime(df["date"]).dt.date
    df["is_empty"] = df["is_empty"].astype(str).str.lower().isin(["true", "1"])

    grid = SessionGrid(
        trading_days=tuple(sorted(set(df["date"]))),
        session_open=session_open,
        session_close=session_close,
        bar_width=bar_width,
        drop_first_bar=drop_first_bar,
        timezone=timezone,
    )
    positions = {ts: i for i, ts in enumerate(grid.slot_starts())}

    series = {}
    for symbol, group in df.groupby("symbol", sort=True):
        frame = _empty_bar_frame(grid)
        idx = group["slot_start"].map(positions)
        if idx.isna().any():
            raise GridError(f"{symbol}: bars in {path} do not sit on the session grid")
        group = group.assign(bar_index=idx.astype(int)).set_index("bar_index")
        for column in ("open", "close", "volume", "dollar_volume"):
            frame[column] = group[column].reindex(frame["bar_index"]).to_numpy(dtype=float)
        frame["trade_count"] = group["trade_count"].reindex(frame["bar_index"]).fillna(0).astype(int).to_numpy()
        frame["is_empty"] = group["is_empty"].reindex(frame["bar_index"]).fillna(True).astype(bool).to_numpy()
        frame[["volume", "dollar_volume"]] = frame[["volume", "dollar_volume"]].fillna(0.0)
        series[symbol] = BarSeries(symbol=symbol, grid=grid, frame=frame[BAR_COLUMNS])
    logger.info(f"Loaded bars for {len(series)} symbols from {path}")
    return series
