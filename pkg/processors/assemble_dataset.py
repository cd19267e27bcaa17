#!/usr/bin/env python3
"""
Dataset stage: features + measures -> one labeled prediction dataset.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, require_path, run_stage

from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter
from hftnet.exceptions import ConfigError
from hftnet.features import read_features_csv
from hftnet.measures import assemble
from hftnet.models import Dataset, MeasureKind

logger = logging.getLogger(__name__)


class DatasetAssembler:
    """Builds the Model 1 (own features) or Model 2 (own + cross) dataset for a target."""

    def __init__(self, config: PipelineConfig):
        self.config = config

    def run(self, features_path: str, target: str, measure: MeasureKind, cross: Optional[str] = None) -> Dataset:
        features, measures = read_features_csv(features_path, timezone=self.config.get("bars.timezone"))
        for symbol in filter(None, (target, cross)):
            if symbol not in features:
                raise ConfigError(f"Unknown firm {symbol!r}; features exist for {sorted(features)}")
        data = assemble(
            features[target],
            measures[target],
            measure,
            horizon=self.config.get("measures.horizon"),
            cross=features[cross] if cross else None,
            min_rows=self.config.get("measures.min_rows"),
            feature_set=self.config.get("features.feature_set"),
        )
        logger.info(f"Dataset {target} (cross={cross}, {measure.value}): {len(data)} rows, drops {data.drop_counts}")
        return data

    def export(self, data: Dataset, output_dir: str) -> Tuple[str, str]:
        task = data.task
        name = f"dataset_{task.target}_{task.measure.value}" + (f"_x_{task.cross}" if task.cross else "")
        return CSVExporter(output_dir).export_dataset(data, name)


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Assemble a labeled dataset for one target firm')
    add_common_arguments(parser)
    parser.add_argument('--features', type=str, help='Features CSV written by the features stage')
    parser.add_argument('--target', type=str, required=True, help='Target firm')
    parser.add_argument('--cross', type=str, help='Cross firm whose features are appended')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    output_dir = config.get("run.output_dir")
    features_path = require_path(args.features or os.path.join(output_dir, "features.csv"), "Features CSV")
    assembler = DatasetAssembler(config)
    for measure in config.measures():
        assembler.export(assembler.run(features_path, args.target, measure, args.cross), output_dir)


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
