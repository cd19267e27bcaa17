#!/usr/bin/env python3
"""
Features stage: bars -> microstructure variables and market measures per firm.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Mapping, Optional, Tuple

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, require_path, run_stage

from hftnet.bars import read_bars_csv
from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter
from hftnet.exceptions import InsufficientDataError
from hftnet.features import compute_frame
from hftnet.measures import compute_measures
from hftnet.models import BarSeries, FeatureFrame, MeasureSeries

logger = logging.getLogger(__name__)


class FeatureBuilder:
    """Computes FeatureFrames and MeasureSeries for every firm."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.skipped: Dict[str, str] = {}

    def run(self, series: Mapping[str, BarSeries]) -> Tuple[Dict[str, FeatureFrame], Dict[str, MeasureSeries]]:
        feature_cfg = self.config.feature_config()
        features, measures = {}, {}
        for symbol in sorted(series):
            try:
                features[symbol] = compute_frame(series[symbol], feature_cfg)
            except InsufficientDataError as e:
                self.skipped[symbol] = str(e)
                logger.warning(f"Skipping {symbol}: {e}")
                continue
            measures[symbol] = compute_measures(series[symbol], feature_cfg.lookback)
            diagnostics = {k: v for k, v in features[symbol].diagnostics.items() if v}
            logger.debug(f"{symbol}: features computed, diagnostics {diagnostics or 'clean'}")
        logger.info(f"Computed features for {len(features)} firms ({len(self.skipped)} skipped)")
        return features, measures

    def export(self, features, measures, output_dir: str) -> str:
        return CSVExporter(output_dir).export_features(features, measures)


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Compute microstructure features from bars')
    add_common_arguments(parser)
    parser.add_argument('--bars', type=str, help='Bars CSV written by the bars stage')
    parser.add_argument('--bvc-sigma', choices=['global', 'trailing'], help='BVC sigma source')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    if args.bvc_sigma:
        config.set("features.bvc_sigma_mode", args.bvc_sigma)
    output_dir = config.get("run.output_dir")
    bars_path = require_path(args.bars or os.path.join(output_dir, "bars.csv"), "Bars CSV")
    grid = config.grid_settings()
    series = read_bars_csv(bars_path, **grid)
    builder = FeatureBuilder(config)
    features, measures = builder.run(series)
    builder.export(features, measures, output_dir)


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
