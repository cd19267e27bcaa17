#!/usr/bin/env python3
"""
Bars stage: trade CSVs -> filtered trades -> 30-minute bars on a shared grid.

Firms failing the liquidity screen are excluded and reported.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Sequence

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, run_stage

from hftnet.bars import build_bar_series, build_grid, filter_trades, load_trades, screen_liquidity
from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter, write_json
from hftnet.exceptions import ConfigError, InsufficientDataError
from hftnet.models import BarSeries, FilterReport

logger = logging.getLogger(__name__)


@dataclass
class BarBuildResult:
    """Bars of the firms that passed the liquidity screen, plus what was dropped."""
    series: Dict[str, BarSeries]
    filter_report: FilterReport
    excluded: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> Dict:
        return {
            "trades_in": self.filter_report.total_in,
            "trades_kept": self.filter_report.total_out,
            "dropped_by_rule": dict(self.filter_report.dropped),
            "firms": sorted(self.series),
            "excluded_sparse_fraction": dict(sorted(self.excluded.items())),
        }


class BarBuilder:
    """Turns raw trade files into screened BarSeries."""

    def __init__(self, config: PipelineConfig):
        self.config = config

    def run_frame(self, trades, start: Optional[date] = None, end: Optional[date] = None,
                  symbols: Optional[Sequence[str]] = None) -> BarBuildResult:
        """Build bars from an already loaded trade frame, optionally limited to a date range and firm list."""
        grid_settings = self.config.grid_settings()
        if symbols:
            trades = trades[trades["symbol"].isin(list(symbols))]
        filtered, report = filter_trades(
            trades, self.config.filter_rules(), grid_settings["session_open"], grid_settings["session_close"],
        )
        if filtered.empty:
            raise InsufficientDataError("No trades survived filtering")

        grid = build_grid(filtered, start=start, end=end, **grid_settings)
        if not grid.trading_days:
            raise InsufficientDataError(f"No trading days between {start} and {end}")
        local_dates = filtered["timestamp"].dt.tz_convert(grid.timezone).dt.date
        filtered = filtered[local_dates.isin(set(grid.trading_days))]

        series = build_bar_series(filtered, grid, self.config.fill_policy(), jobs=self.config.get("run.jobs"))

        kept, excluded = {}, {}
        for symbol, bars in series.items():
            keep, sparse_fraction = screen_liquidity(
                bars,
                self.config.get("bars.min_trades_per_bar"),
                self.config.get("bars.max_sparse_fraction"),
            )
            if keep:
                kept[symbol] = bars
            else:
                excluded[symbol] = sparse_fraction
                logger.warning(f"Excluding {symbol}: {sparse_fraction:.1%} of bars are sparse")

        logger.info(
            f"Built {grid.n_bars} bars x {len(kept)} firms over {len(grid.trading_days)} days "
            f"({len(excluded)} excluded by liquidity screen)"
        )
        return BarBuildResult(series=kept, filter_report=report, excluded=excluded)

    def run(self, trade_paths: List[str], start: Optional[date] = None, end: Optional[date] = None) -> BarBuildResult:
        if not trade_paths:
            raise ConfigError("No trade files given (use --trades or run.trades)")
        trades = load_trades(trade_paths, tz=self.config.get("bars.timezone"))
        return self.run_frame(trades, start, end)

    def export(self, result: BarBuildResult, output_dir: str) -> str:
        exporter = CSVExporter(output_dir)
        path = exporter.export_bars(result.series)
        write_json(result.summary(), os.path.join(output_dir, "bars_report.json"))
        return path


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Aggregate trades into 30-minute bars')
    add_common_arguments(parser)
    parser.add_argument('--trades', nargs='+', help='Trade CSV files')
    parser.add_argument('--tz', type=str, help='Timezone for naive timestamps (default America/New_York)')
    parser.add_argument('--start', type=date.fromisoformat, help='First trading day (YYYY-MM-DD)')
    parser.add_argument('--end', type=date.fromisoformat, help='Last trading day (YYYY-MM-DD)')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    if args.tz:
        config.set("bars.timezone", args.tz)
    builder = BarBuilder(config)
    result = builder.run(args.trades or config.get("run.trades"), args.start, args.end)
    builder.export(result, config.get("run.output_dir"))


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
