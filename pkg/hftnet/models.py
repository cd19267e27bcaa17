"""
Data models for trade aggregation, feature construction, forests and networks.
"""

from dataclasses import dataclass, field
from datetime import date, time, timedelta
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd


FEATURE_NAMES: Tuple[str, ...] = ("roll", "roll_impact", "kyle", "amihud", "vpin")
CROSS_SUFFIX = ".x"


class MeasureKind(Enum):
    """Market measures whose sign of change is predicted."""
    VOLATILITY = "vol"
    KURTOSIS = "kurt"


class FillPolicy(Enum):
    """How empty bars are treated before feature construction."""
    NONE = "none"
    FORWARD_FILL_CLOSE = "forward_fill_close"


class SigmaMode(Enum):
    """Where the price-change standard deviation used by BVC comes from."""
    GLOBAL = "global"
    TRAILING = "trailing"


class SplitMode(Enum):
    """Train/test splitting schemes."""
    PURGED_CV = "purged"
    CHRONOLOGICAL = "chrono"


class Criterion(Enum):
    """Impurity measure used to score splits."""
    ENTROPY = "entropy"
    GINI = "gini"


@dataclass(frozen=True)
class Trade:
    """One executed trade for one symbol."""
    symbol: str
    timestamp: pd.Timestamp
    price: float
    volume: float
    correction_flag: Optional[str] = None
    symbol_suffix: Optional[str] = None


@dataclass(frozen=True)
class FilterRules:
    """Switches for the four trade filters."""
    positive_price_volume: bool = True
    market_hours: bool = True
    blank_suffix: bool = True
    correction_zero: bool = True


@dataclass
class FilterReport:
    """Per-rule drop counts from filter_trades."""
    total_in: int = 0
    dropped: Dict[str, int] = field(default_factory=dict)

    @property
    def total_out(self) -> int:
        return self.total_in - sum(self.dropped.values())


@dataclass(frozen=True)
class SessionGrid:
    """Shared bar grid: session hours, bar width and the ordered trading days."""
    trading_days: Tuple[date, ...]
    session_open: time = time(9, 30)
    session_close: time = time(16, 0)
    bar_width: timedelta = timedelta(minutes=30)
    drop_first_bar: bool = True
    timezone: str = "America/New_York"

    @property
    def raw_slots_per_day(self) -> int:
        span = (
            timedelta(hours=self.session_close.hour, minutes=self.session_close.minute)
            - timedelta(hours=self.session_open.hour, minutes=self.session_open.minute)
        )
        return int(span / self.bar_width)

    @property
    def first_slot(self) -> int:
        return 1 if self.drop_first_bar else 0

    @property
    def slots_per_day(self) -> int:
        return self.raw_slots_per_day - self.first_slot

    @property
    def n_bars(self) -> int:
        return len(self.trading_days) * self.slots_per_day

    def slot_start(self, bar_index: int) -> pd.Timestamp:
        """Wall-clock start of a global bar index."""
        day_idx, slot = divmod(bar_index, self.slots_per_day)
        day = self.trading_days[day_idx]
        open_ts = pd.Timestamp.combine(day, self.session_open).tz_localize(self.timezone)
        return open_ts + (slot + self.first_slot) * self.bar_width

    def slot_starts(self) -> pd.DatetimeIndex:
        """Wall-clock start of every bar on the grid, in bar_index order."""
        return pd.DatetimeIndex([self.slot_start(i) for i in range(self.n_bars)])


@dataclass(frozen=True)
class TimeBar:
    """One 30-minute bar of one firm."""
    bar_index: int
    date: date
    slot_start: pd.Timestamp
    open: float
    close: float
    volume: float
    dollar_volume: float
    trade_count: int
    is_empty: bool


@dataclass(frozen=True)
class BarSeries:
    """One firm's bars, one row per grid slot.

    ``frame`` columns: bar_index, date, slot_start, open, close, volume,
    dollar_volume, trade_count, is_empty. Treat it as read-only.
    """
    symbol: str
    grid: SessionGrid
    frame: pd.DataFrame

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def closes(self) -> np.ndarray:
        return self.frame["close"].to_numpy(dtype=float)

    @property
    def volumes(self) -> np.ndarray:
        return self.frame["volume"].to_numpy(dtype=float)

    @property
    def dollar_volumes(self) -> np.ndarray:
        return self.frame["dollar_volume"].to_numpy(dtype=float)

    def bar(self, bar_index: int) -> TimeBar:
        row = self.frame.iloc[bar_index]
        return TimeBar(
            bar_index=int(row["bar_index"]),
            date=row["date"],
            slot_start=row["slot_start"],
            open=float(row["open"]),
            close=float(row["close"]),
            volume=float(row["volume"]),
            dollar_volume=float(row["dollar_volume"]),
            trade_count=int(row["trade_count"]),
            is_empty=bool(row["is_empty"]),
        )


@dataclass(frozen=True)
class FeatureConfig:
    """Lookback and BVC settings for microstructure features."""
    lookback: int = 50
    bvc_sigma_mode: SigmaMode = SigmaMode.GLOBAL
    epsilon_sigma: float = 1e-12
    feature_set: Tuple[str, ...] = FEATURE_NAMES


@dataclass(frozen=True)
class FeatureFrame:
    """Per-bar microstructure variables of one firm; NaN marks a missing cell."""
    symbol: str
    frame: pd.DataFrame
    lookback: int
    bvc_sigma: Optional[float] = None
    bvc_sigma_mode: SigmaMode = SigmaMode.GLOBAL
    diagnostics: Dict[str, int] = field(default_factory=dict)

    @property
    def feature_names(self) -> List[str]:
        return [c for c in self.frame.columns if c in FEATURE_NAMES]


@dataclass(frozen=True)
class MeasureSeries:
    """Per-bar realized volatility and excess kurtosis of one firm."""
    symbol: str
    frame: pd.DataFrame
    lookback: int

    def values(self, kind: MeasureKind) -> np.ndarray:
        column = "sigma" if kind is MeasureKind.VOLATILITY else "kurt"
        return self.frame[column].to_numpy(dtype=float)


@dataclass(frozen=True)
class TaskDescriptor:
    """Identifies one prediction task."""
    target: str
    measure: MeasureKind
    horizon: int
    lookback: int
    cross: Optional[str] = None
    bvc_sigma_mode: str = SigmaMode.GLOBAL.value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "target": self.target,
            "cross": self.cross,
            "measure": self.measure.value,
            "horizon": self.horizon,
            "lookback": self.lookback,
            "bvc_sigma_mode": self.bvc_sigma_mode,
        }


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, labels in {-1, +1} and the timestamps used for purging."""
    bar_index: np.ndarray
    timestamps: pd.DatetimeIndex
    X: np.ndarray
    y: np.ndarray
    feature_names: Tuple[str, ...]
    task: TaskDescriptor
    drop_counts: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Sub-dataset restricted to the given row positions."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            bar_index=self.bar_index[rows],
            timestamps=self.timestamps[rows],
            X=self.X[rows],
            y=self.y[rows],
            feature_names=self.feature_names,
            task=self.task,
            drop_counts=dict(self.drop_counts),
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.feature_names))
        df.insert(0, "label", self.y.astype(int))
        df.insert(0, "timestamp", self.timestamps)
        df.insert(0, "bar_index", self.bar_index.astype(int))
        return df


@dataclass
class TreeNode:
    """Decision tree node: internal when split_feature is set, leaf otherwise."""
    split_feature: Optional[int] = None
    split_point: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    votes_neg: int = 0
    votes_pos: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.split_feature is None

    @property
    def prediction(self) -> int:
        # majority label, tie -> -1
        return 1 if self.votes_pos > self.votes_neg else -1


@dataclass(frozen=True)
class ForestParams:
    """Hyper-parameters of the random forest."""
    trees: int = 1000
    max_features: Optional[int] = None
    criterion: Criterion = Criterion.ENTROPY


@dataclass(frozen=True)
class RocResult:
    """ROC curve points and the area under it."""
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    n_pos: int
    n_neg: int

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class AucTestResult:
    """Paired bootstrap test of AUC(model 2) > AUC(model 1)."""
    auc1: float
    auc2: float
    diff: float
    s: float
    d_stat: float
    p_value: float
    B: int
    seed: int
    degenerate: bool = False
    replicate_diffs: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "auc1": self.auc1,
            "auc2": self.auc2,
            "diff": self.diff,
            "s": self.s,
            "d": self.d_stat,
            "p": self.p_value,
            "B": self.B,
            "seed": self.seed,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class SplitSettings:
    """Parsed split mode string such as ``purged:G=6,purge=5d``."""
    mode: SplitMode = SplitMode.CHRONOLOGICAL
    n_groups: int = 6
    train_fraction: float = 0.5
    purge_days: float = 5.0


@dataclass(frozen=True)
class Fold:
    """One train/test partition, with the wall-clock span of its test interval."""
    index: int
    train: np.ndarray
    test: np.ndarray
    test_start: pd.Timestamp
    test_end: pd.Timestamp


@dataclass(frozen=True)
class SplitPlan:
    """Folds over one set of timestamps."""
    settings: SplitSettings
    folds: Tuple[Fold, ...]
    boundaries: Tuple[Tuple[pd.Timestamp, pd.Timestamp], ...]

    @property
    def mode(self) -> SplitMode:
        return self.settings.mode

    def project(self, timestamps: pd.DatetimeIndex) -> "SplitPlan":
        """Same fold boundaries applied to another dataset's timestamps."""
        from .evaluation import project_splits
        return project_splits(self, timestamps)


@dataclass(frozen=True)
class PairwiseSettings:
    """Everything a Model 1 / Model 2 comparison needs besides the data."""
    horizon: int = 50
    min_rows: int = 200
    feature_set: Tuple[str, ...] = FEATURE_NAMES
    split: SplitSettings = SplitSettings()
    forest: ForestParams = ForestParams()
    bootstrap: int = 2000
    bootstrap_block: int = 100
    max_redraws: int = 100
    seed: int = 42
    jobs: int = 1


@dataclass
class MdaReport:
    """Permutation importances per fold, plus the fold baselines."""
    per_fold: pd.DataFrame
    baseline_accuracy: Dict[int, float]
    repeats: int = 1

    @property
    def mean(self) -> pd.Series:
        return self.per_fold.groupby("feature", sort=False)["mda"].mean()


@dataclass(frozen=True)
class FirmNode:
    """Network node with optional size and sector tags."""
    id: str
    mcap: Optional[float] = None
    sector: Optional[str] = None


@dataclass
class EdgeResult:
    """Test outcome for one ordered pair: does source's data help predict target?"""
    source: str
    target: str
    auc1: float
    auc2: float
    diff: float
    s: float
    d_stat: float
    p_raw: float
    p_adjusted: float = float("nan")
    n_test: int = 0
    fold_mode: str = SplitMode.CHRONOLOGICAL.value
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "src": self.source,
            "dst": self.target,
            "auc1": self.auc1,
            "auc2": self.auc2,
            "diff": self.diff,
            "s": self.s,
            "d": self.d_stat,
            "p": self.p_raw,
            "p_adj": self.p_adjusted,
            "n_test": self.n_test,
            "fold_mode": self.fold_mode,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EdgeResult":
        return cls(
            source=data["src"],
            target=data["dst"],
            auc1=float(data["auc1"]),
            auc2=float(data["auc2"]),
            diff=float(data["diff"]),
            s=float(data.get("s", float("nan"))),
            d_stat=float(data.get("d", float("nan"))),
            p_raw=float(data["p"]),
            p_adjusted=float(data.get("p_adj", float("nan"))),
            n_test=int(data.get("n_test", 0)),
            fold_mode=str(data.get("fold_mode", SplitMode.CHRONOLOGICAL.value)),
            degenerate=bool(data.get("degenerate", False)),
        )


@dataclass
class Network:
    """Directed network of accepted edges (weight = AUC increase)."""
    nodes: List[FirmNode]
    edges: List[EdgeResult]
    alpha: float = 0.05
    measure: Optional[str] = None
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    manifest_id: Optional[str] = None

    @property
    def node_ids(self) -> List[str]:
        return [n.id for n in self.nodes]


@dataclass(frozen=True)
class SizeGroupSeries:
    """Value-weighted per-bar series of a group of firms."""
    group: str
    frame: pd.DataFrame
    weights: Dict[str, float]


@dataclass(frozen=True)
class Influence:
    """Planted lead-lag link in the synthetic market."""
    source: int
    target: int
    lag: int
    strength: float


@dataclass
class SynthConfig:
    """Synthetic market parameters."""
    n_firms: int = 6
    days: int = 126
    trades_per_bar: float = 20.0
    base_prices: Optional[List[float]] = None
    sigma_low: float = 0.002
    vol_ratio: float = 3.0
    switch_up: float = 0.01
    switch_down: float = 0.04
    burst_prob: float = 0.05
    burst_drift: float = 4.0
    influences: List[Influence] = field(default_factory=list)
    sparse: bool = False
    start_date: str = "2018-01-02"
    timezone: str = "America/New_York"
    seed: int = 7
