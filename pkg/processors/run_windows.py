#!/usr/bin/env python3
"""
Window-by-window orchestration: for every (start, end, firms) window build
bars and features, test all ordered pairs, apply FDR and write the network.
Windows run sequentially; parallelism lives inside each window.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass
from datetime import date
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.build_bars import BarBuilder
from processors.build_network import NetworkBuilder, load_firm_metadata
from processors.common import add_common_arguments, run_stage
from processors.compute_features import FeatureBuilder
from processors.estimate_edges import EdgeEstimationStage

from hftnet.bars import load_trades
from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter
from hftnet.exceptions import ConfigError, DataError, DegenerateError, InsufficientDataError
from hftnet.logging_utils import log_memory_usage
from hftnet.manifest import RunManifest
from hftnet.network import aggregate_group, density, rank_by_market_cap, size_group_scenarios, size_groups, yearly_windows

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Window:
    start: Optional[date]
    end: Optional[date]
    firms: Tuple[str, ...] = ()

    @property
    def label(self) -> str:
        if self.start is None and self.end is None:
            return "all"
        return f"{self.start or 'begin'}_{self.end or 'end'}"


def _as_date(value: Any, where: str) -> Optional[date]:
    if value is None or isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as e:
        raise ConfigError(f"Invalid date {value!r} in {where}") from e


def parse_windows(entries: Sequence[Any]) -> List[Window]:
    """Windows as ``{"start", "end", "firms"}`` objects or ``[start, end]`` pairs."""
    windows = []
    for i, entry in enumerate(entries):
        if isinstance(entry, dict):
            start, end, firms = entry.get("start"), entry.get("end"), entry.get("firms") or ()
        elif isinstance(entry, (list, tuple)) and len(entry) in (2, 3):
            start, end, firms = entry[0], entry[1], entry[2] if len(entry) == 3 else ()
        else:
            raise ConfigError(f"run.windows[{i}] must be an object or a [start, end] pair")
        window = Window(_as_date(start, f"run.windows[{i}]"), _as_date(end, f"run.windows[{i}]"), tuple(firms))
        if window.start and window.end and window.start > window.end:
            raise ConfigError(f"run.windows[{i}] starts after it ends")
        windows.append(window)
    return windows


class WindowRunner:
    """Runs the full pipeline per window and keeps the run manifest."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = config.get("run.output_dir")
        self.meta = load_firm_metadata(config.get("run.firms_file"))
        self.density_rows: List[Dict[str, Any]] = []
        self.manifest: Optional[RunManifest] = None

    def windows(self) -> List[Window]:
        if self.config.get("run.windows"):
            return parse_windows(self.config.get("run.windows"))
        if self.config.get("run.years"):
            return [Window(start, end) for start, end in yearly_windows(self.config.get("run.years"))]
        return [Window(None, None)]

    def selected_firms(self) -> Tuple[str, ...]:
        top_n = self.config.get("run.top_n")
        if not top_n:
            return ()
        if self.meta is None:
            raise ConfigError("run.top_n needs firm metadata (run.firms_file)")
        firms = rank_by_market_cap(self.meta, int(top_n), per_sector=bool(self.config.get("run.per_sector")))
        logger.info(f"Selected {len(firms)} firms by market cap (top {top_n}, per_sector={self.config.get('run.per_sector')})")
        return tuple(firms)

    def run(self, trade_paths: Sequence[str]) -> str:
        if not trade_paths:
            raise ConfigError("No trade files given (use --trades or run.trades)")
        inputs = list(trade_paths) + ([self.config.get("run.firms_file")] if self.meta is not None else [])
        self.manifest = RunManifest.create(self.config.config_hash(), self.config.get("run.seed"), inputs)
        os.makedirs(self.output_dir, exist_ok=True)
        self.config.dump(os.path.join(self.output_dir, "effective_config.json"))

        trades = load_trades(list(trade_paths), tz=self.config.get("bars.timezone"))
        selected = self.selected_firms()
        windows = self.windows()
        logger.info(f"Running {len(windows)} window(s), manifest {self.manifest.manifest_id}")

        networks = 0
        for window in windows:
            networks += self.run_window(trades, window, selected)
            log_memory_usage(f"window {window.label}")

        density_path = CSVExporter(self.output_dir).export_density_series(self.density_rows)
        self.manifest.write(os.path.join(self.output_dir, "manifest.json"))
        if networks == 0:
            raise DegenerateError("No window produced a network")
        logger.info(f"Finished: {networks} network(s) over {len(windows)} window(s); density series in {density_path}")
        return density_path

    def run_window(self, trades: pd.DataFrame, window: Window, selected: Tuple[str, ...]) -> int:
        start_time = time.time()
        firms = window.firms or selected
        entry: Dict[str, Any] = {"label": window.label, "start": window.start, "end": window.end}
        try:
            bars = BarBuilder(self.config).run_frame(trades, window.start, window.end, firms or None)
        except InsufficientDataError as e:
            logger.warning(f"Skipping window {window.label}: {e}")
            self.manifest.record_window(**entry, skipped=str(e))
            return 0

        feature_builder = FeatureBuilder(self.config)
        features, measures = feature_builder.run(bars.series)
        entry.update(
            trades_in=bars.filter_report.total_in,
            dropped_by_rule=dict(bars.filter_report.dropped),
            excluded_sparse=sorted(bars.excluded),
            skipped_features=dict(sorted(feature_builder.skipped.items())),
            firms=sorted(features),
        )
        if len(features) < 2:
            logger.warning(f"Skipping window {window.label}: {len(features)} usable firm(s)")
            self.manifest.record_window(**entry, skipped="fewer than 2 usable firms",
                                        seconds=round(time.time() - start_time, 1))
            return 0

        grid = next(iter(bars.series.values())).grid
        window_start, window_end = grid.trading_days[0], grid.trading_days[-1]
        window_dir = os.path.join(self.output_dir, f"{window_start}_{window_end}")
        edge_stage = EdgeEstimationStage(self.config)
        network_builder = NetworkBuilder(self.config, self.meta)

        built = 0
        for kind in self.config.measures():
            try:
                results, estimator = edge_stage.run(features, measures, kind)
            except (DataError, DegenerateError) as e:
                logger.warning(f"Window {window.label} ({kind.value}): no network, {e}")
                continue
            edge_stage.export(results, estimator, kind, window_dir)
            network = network_builder.run(results, kind, symbols=estimator.tested_firms,
                                          manifest_id=self.manifest.manifest_id)
            network_builder.export_with_subset(network, window_dir)
            self.density_rows.append({
                "window_start": window_start.isoformat(),
                "window_end": window_end.isoformat(),
                "measure": kind.value,
                "density": density(network),
                "n_firms": len(network.nodes),
                "n_edges": len(network.edges),
                "manifest_id": self.manifest.manifest_id,
            })
            built += 1

        if self.config.get("network.size_study"):
            self.run_size_study(features, measures, window_dir)

        entry.update(pairs=edge_stage.stats, seconds=round(time.time() - start_time, 1))
        self.manifest.record_window(**entry)
        logger.info(f"Window {window.label}: {built} network(s), {len(features)} firms in {entry['seconds']}s")
        return built

    def run_size_study(self, features, measures, window_dir: str) -> Optional[str]:
        """Small vs large market-cap group scenarios for this window."""
        if self.meta is None:
            logger.warning("Size-group study needs firm metadata; skipped")
            return None
        try:
            groups = size_groups(
                self.meta[self.meta["symbol"].isin(list(features))],
                small_decile=self.config.get("network.small_decile"),
                large_decile=self.config.get("network.large_decile"),
            )
            weights = dict(zip(self.meta["symbol"].astype(str), self.meta["mcap"].astype(float)))
            mda_reports = {}
            aggregated = {}
            for name, members in groups.items():
                present = [m for m in members if m in features]
                aggregated[name] = aggregate_group(
                    name, {m: features[m] for m in present}, {m: measures[m] for m in present}, weights,
                )
            table = size_group_scenarios(
                aggregated["small"], aggregated["large"], self.config.pairwise_settings(),
                n_groups=self.config.get("network.size_cv_groups"),
                mda_repeats=self.config.get("evaluation.mda_repeats"),
                mda_reports=mda_reports,
            )
        except (DataError, DegenerateError) as e:
            logger.warning(f"Size-group study skipped: {e}")
            return None
        exporter = CSVExporter(window_dir)
        for scenario, report in sorted(mda_reports.items()):
            exporter.export_mda(report, f"mda_size_{scenario}.csv")
        return exporter.export_table(table, "size_groups.csv")


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Run the full pipeline over every configured window')
    add_common_arguments(parser)
    parser.add_argument('--trades', nargs='+', help='Trade CSV files')
    parser.add_argument('--firms', type=str, help='Firm metadata CSV with symbol, mcap, sector')
    parser.add_argument('--years', type=int, nargs='+', help='Three overlapping 6-month windows per year')
    parser.add_argument('--top-n', type=int, help='Keep the largest N firms (per sector) by market cap')
    parser.add_argument('--size-study', action='store_true', help='Also run the small/large size-group study')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    if args.firms:
        config.set("run.firms_file", args.firms)
    if args.years:
        config.set("run.years", list(args.years))
    if args.top_n:
        config.set("run.top_n", args.top_n)
    if args.size_study:
        config.set("network.size_study", True)
    WindowRunner(config).run(args.trades or config.get("run.trades"))


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
