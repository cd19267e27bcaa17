"""
Configuration management for the hftnet pipeline.

Resolution order: built-in defaults, then a JSON/TOML file, then HFTNET_*
environment variables (a .env file is honoured), then CLI flags.
"""

import copy
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import time, timedelta
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from .exceptions import ConfigError
from .models import (
    FEATURE_NAMES, Criterion, FeatureConfig, FillPolicy, FilterRules, ForestParams,
    Influence, MeasureKind, PairwiseSettings, SigmaMode, SplitMode, SplitSettings, SynthConfig,
)

logger = logging.getLogger(__name__)

ENV_OVERRIDES = {
    "HFTNET_SEED": ("run.seed", int),
    "HFTNET_JOBS": ("run.jobs", int),
    "HFTNET_LOG_LEVEL": ("run.log_level", str),
    "HFTNET_OUTPUT_DIR": ("run.output_dir", str),
}

UNHASHED_KEYS = ("run.jobs", "run.output_dir", "run.log_level", "run.log_file", "run.event_log")


def default_config() -> Dict[str, Any]:
    """Built-in defaults: W = 50, h = 50, 1000 trees, 2000 bootstrap replicates, alpha 0.05."""
    return {
        "bars": {
            "timezone": "America/New_York",
            "session_open": "09:30",
            "session_close": "16:00",
            "bar_width_minutes": 30,
            "drop_first_bar": True,
            "fill_policy": FillPolicy.FORWARD_FILL_CLOSE.value,
            "min_trades_per_bar": 5,
            "max_sparse_fraction": 0.25,
            "filters": {
                "positive_price_volume": True,
                "market_hours": True,
                "blank_suffix": True,
                "correction_zero": True,
            },
        },
        "features": {
            "lookback": 50,
            "bvc_sigma_mode": SigmaMode.GLOBAL.value,
            "epsilon_sigma": 1e-12,
            "feature_set": list(FEATURE_NAMES),
        },
        "measures": {
            "horizon": 50,
            "min_rows": 200,
        },
        "forest": {
            "trees": 1000,
            "max_features": None,
            "criterion": Criterion.ENTROPY.value,
        },
        "evaluation": {
            "bootstrap": 2000,
            "bootstrap_block": 100,
            "max_redraws": 100,
            "split": "chrono:frac=0.5,purge=5d",
            "mda_repeats": 1,
        },
        "network": {
            "alpha": 0.05,
            "measures": [MeasureKind.VOLATILITY.value],
            "top_k": 10,
            "subset": [],
            "size_study": False,
            "small_decile": 7,
            "large_decile": 1,
            "size_cv_groups": 10,
        },
        "synth": {
            "n_firms": 6,
            "days": 126,
            "trades_per_bar": 20.0,
            "sigma_low": 0.002,
            "vol_ratio": 3.0,
            "switch_up": 0.01,
            "switch_down": 0.04,
            "burst_prob": 0.05,
            "burst_drift": 4.0,
            "influences": [],
            "sparse": False,
            "start_date": "2018-01-02",
        },
        "run": {
            "seed": 42,
            "jobs": 1,
            "output_dir": "results",
            "trades": [],
            "firms_file": None,
            "windows": [],
            "years": [],
            "top_n": None,
            "per_sector": True,
            "log_level": "INFO",
            "log_file": "hftnet.log",
            "event_log": None,
        },
    }


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base


def _parse_clock(value: str) -> time:
    try:
        hours, minutes = value.split(":")[:2]
        return time(int(hours), int(minutes))
    except (ValueError, AttributeError) as e:
        raise ConfigError(f"Invalid time of day {value!r}: expected HH:MM") from e


def _parse_days(value: Any) -> float:
    text = str(value).strip().lower()
    if text.endswith("d"):
        text = text[:-1]
    try:
        days = float(text)
    except ValueError as e:
        raise ConfigError(f"Invalid purge length {value!r}: expected e.g. 5d") from e
    if days < 0:
        raise ConfigError(f"Purge length must be non-negative, got {value!r}")
    return days


def parse_split(spec: str) -> SplitSettings:
    """Parse ``purged:G=6,purge=5d`` or ``chrono:frac=0.5,purge=5d``."""
    if not spec:
        raise ConfigError("Empty split specification")
    mode_text, _, params_text = spec.partition(":")
    try:
        mode = SplitMode(mode_text.strip().lower())
    except ValueError as e:
        raise ConfigError(f"Unknown split mode {mode_text!r}: use 'purged' or 'chrono'") from e

    params: Dict[str, str] = {}
    for item in filter(None, (p.strip() for p in params_text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Malformed split parameter {item!r} in {spec!r}")
        params[key.strip().lower()] = value.strip()

    settings = SplitSettings(mode=mode)
    n_groups = int(params.get("g", settings.n_groups))
    fraction = float(params.get("frac", settings.train_fraction))
    purge = _parse_days(params.get("purge", settings.purge_days))

    if mode is SplitMode.PURGED_CV and n_groups < 2:
        raise ConfigError(f"Purged CV needs G >= 2, got {n_groups}")
    if mode is SplitMode.CHRONOLOGICAL and not 0.0 < fraction < 1.0:
        raise ConfigError(f"Chronological train fraction must lie in (0, 1), got {fraction}")
    return SplitSettings(mode=mode, n_groups=n_groups, train_fraction=fraction, purge_days=purge)


class PipelineConfig:
    """Configuration management for the hftnet pipeline."""

    def __init__(self, config_file: Optional[str] = None, use_env: bool = True):
        self.config = default_config()
        if config_file:
            self._load_config_file(config_file)
        if use_env:
            self._apply_environment()
        self.validate()

    def _load_config_file(self, config_file: str):
        """Load configuration from a JSON or TOML file."""
        if not os.path.exists(config_file):
            raise ConfigError(f"Config file not found: {config_file}")
        try:
            if config_file.lower().endswith(".toml"):
                with open(config_file, "rb") as f:
                    file_config = tomllib.load(f)
            else:
                with open(config_file, "r", encoding="utf-8") as f:
                    file_config = json.load(f)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Failed to parse config file {config_file}: {e}") from e
        if not isinstance(file_config, dict):
            raise ConfigError(f"Config file {config_file} must contain a table/object")
        _deep_merge(self.config, file_config)
        logger.info(f"Loaded configuration from {config_file}")

    def _apply_environment(self):
        load_dotenv()
        for env_name, (key, cast) in ENV_OVERRIDES.items():
            raw = os.getenv(env_name)
            if raw is None or raw == "":
                continue
            try:
                self.set(key, cast(raw))
            except ValueError as e:
                raise ConfigError(f"Invalid value for {env_name}: {raw!r}") from e
            logger.debug(f"Override {key} from environment ({env_name})")

    def validate(self):
        """Validate configuration values; raises ConfigError on the first problem."""
        grid_open = _parse_clock(self.get("bars.session_open"))
        grid_close = _parse_clock(self.get("bars.session_close"))
        width = self.get("bars.bar_width_minutes")
        span = (grid_close.hour * 60 + grid_close.minute) - (grid_open.hour * 60 + grid_open.minute)
        if not isinstance(width, int) or width <= 0 or span <= 0 or span % width != 0:
            raise ConfigError(
                f"Session {self.get('bars.session_open')}-{self.get('bars.session_close')} "
                f"is not a positive multiple of {width}-minute bars"
            )
        try:
            FillPolicy(self.get("bars.fill_policy"))
            SigmaMode(self.get("features.bvc_sigma_mode"))
            Criterion(self.get("forest.criterion"))
            for measure in self.get("network.measures"):
                MeasureKind(measure)
        except ValueError as e:
            raise ConfigError(str(e)) from e

        if self.get("features.lookback") < 2:
            raise ConfigError("features.lookback must be >= 2")
        if self.get("features.epsilon_sigma") <= 0:
            raise ConfigError("features.epsilon_sigma must be > 0")
        unknown = set(self.get("features.feature_set")) - set(FEATURE_NAMES)
        if unknown or not self.get("features.feature_set"):
            raise ConfigError(f"features.feature_set has unknown or no entries: {sorted(unknown)}")
        if self.get("measures.horizon") < 1:
            raise ConfigError("measures.horizon must be >= 1")
        if self.get("forest.trees") < 1:
            raise ConfigError("forest.trees must be >= 1")
        max_features = self.get("forest.max_features")
        n_features = len(self.get("features.feature_set"))
        if max_features is not None and not 1 <= max_features <= n_features:
            raise ConfigError(f"forest.max_features must lie in [1, {n_features}], got {max_features}")
        if self.get("evaluation.bootstrap") < 100:
            raise ConfigError("evaluation.bootstrap must be >= 100")
        if not 0.0 < self.get("network.alpha") <= 1.0:
            raise ConfigError("network.alpha must lie in (0, 1]")
        if self.get("run.jobs") < 1:
            raise ConfigError("run.jobs must be >= 1")
        parse_split(self.get("evaluation.split"))

    def get(self, key: str, default=None):
        """Get configuration value with dot notation support."""
        keys = key.split('.')
        value = self.config
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """Set configuration value with dot notation support."""
        keys = key.split('.')
        target = self.config
        for k in keys[:-1]:
            target = target.setdefault(k, {})
        target[keys[-1]] = value

    def config_hash(self) -> str:
        """Digest of every setting that can change results; worker count, paths and logging are left out."""
        hashed = self.snapshot()
        for key in UNHASHED_KEYS:
            section, name = key.split(".")
            hashed.get(section, {}).pop(name, None)
        canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def dump(self, path: str):
        """Write the effective configuration."""
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.config, f, indent=2, sort_keys=True, default=str)
            f.write("\n")

    def snapshot(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    # Typed views

    def grid_settings(self) -> Dict[str, Any]:
        return {
            "session_open": _parse_clock(self.get("bars.session_open")),
            "session_close": _parse_clock(self.get("bars.session_close")),
            "bar_width": timedelta(minutes=self.get("bars.bar_width_minutes")),
            "drop_first_bar": bool(self.get("bars.drop_first_bar")),
            "timezone": self.get("bars.timezone"),
        }

    def filter_rules(self) -> FilterRules:
        filters = self.get("bars.filters", {})
        return FilterRules(**{k: bool(v) for k, v in filters.items()})

    def fill_policy(self) -> FillPolicy:
        return FillPolicy(self.get("bars.fill_policy"))

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            lookback=int(self.get("features.lookback")),
            bvc_sigma_mode=SigmaMode(self.get("features.bvc_sigma_mode")),
            epsilon_sigma=float(self.get("features.epsilon_sigma")),
            feature_set=tuple(self.get("features.feature_set")),
        )

    def forest_params(self) -> ForestParams:
        max_features = self.get("forest.max_features")
        return ForestParams(
            trees=int(self.get("forest.trees")),
            max_features=int(max_features) if max_features is not None else None,
            criterion=Criterion(self.get("forest.criterion")),
        )

    def split_settings(self) -> SplitSettings:
        return parse_split(self.get("evaluation.split"))

    def pairwise_settings(self) -> PairwiseSettings:
        return PairwiseSettings(
            horizon=int(self.get("measures.horizon")),
            min_rows=int(self.get("measures.min_rows")),
            feature_set=tuple(self.get("features.feature_set")),
            split=self.split_settings(),
            forest=self.forest_params(),
            bootstrap=int(self.get("evaluation.bootstrap")),
            bootstrap_block=int(self.get("evaluation.bootstrap_block")),
            max_redraws=int(self.get("evaluation.max_redraws")),
            seed=int(self.get("run.seed")),
            jobs=int(self.get("run.jobs")),
        )

    def measures(self) -> List[MeasureKind]:
        return [MeasureKind(m) for m in self.get("network.measures")]

    def synth_config(self) -> SynthConfig:
        section = dict(self.get("synth", {}))
        influences = [
            Influence(
                source=int(item["source"]),
                target=int(item["target"]),
                lag=int(item.get("lag", 10)),
                strength=float(item.get("strength", 0.9)),
            )
            for item in section.pop("influences", [])
        ]
        section.setdefault("seed", self.get("run.seed"))
        section.setdefault("timezone", self.get("bars.timezone"))
        return SynthConfig(influences=influences, **section)
