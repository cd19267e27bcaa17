#!/usr/bin/env python3
"""
Edges stage: Model 1 / Model 2 forests for every ordered firm pair and the
paired bootstrap AUC test, one run per target measure.
"""

import argparse
import logging
import os
import sys
import time
from typing import Dict, List, Mapping, Optional, Tuple

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, require_path, run_stage

from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter, write_json
from hftnet.features import read_features_csv
from hftnet.models import EdgeResult, FeatureFrame, MeasureKind, MeasureSeries
from hftnet.network import PairwiseEstimator

logger = logging.getLogger(__name__)


class EdgeEstimationStage:
    """Runs pairwise estimation and writes edges, pair scores and skip reasons."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.stats: Dict[str, Dict] = {}

    def run(
        self,
        features: Mapping[str, FeatureFrame],
        measures: Mapping[str, MeasureSeries],
        kind: MeasureKind,
    ) -> Tuple[List[EdgeResult], PairwiseEstimator]:
        start = time.time()
        settings = self.config.pairwise_settings()
        logger.info(
            f"Pairwise estimation ({kind.value}): {len(features)} firms, K={settings.forest.trees}, "
            f"B={settings.bootstrap}, split={self.config.get('evaluation.split')}, jobs={settings.jobs}"
        )
        estimator = PairwiseEstimator(features, measures, kind, settings)
        results = estimator.run()
        self.stats[kind.value] = {
            "pairs": len(results),
            "skipped": dict(sorted(estimator.skipped.items())),
            "runtime": round(time.time() - start, 1),
        }
        logger.info(f"{len(results)} pair tests finished in {self.stats[kind.value]['runtime']}s")
        return results, estimator

    def export(self, results: List[EdgeResult], estimator: PairwiseEstimator, kind: MeasureKind, output_dir: str):
        exporter = CSVExporter(output_dir)
        exporter.export_edges(results, f"edges_{kind.value}.csv")
        exporter.export_pair_scores(estimator.scores, f"scores_{kind.value}.csv")
        exporter.export_auc_tests(estimator.tests, f"tests_{kind.value}.json")
        exporter.export_replicate_histograms(estimator.tests, f"bootstrap_hist_{kind.value}.csv")
        write_json({"skipped": dict(sorted(estimator.skipped.items()))},
                   os.path.join(output_dir, f"skipped_{kind.value}.json"))


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Estimate Model 1 vs Model 2 AUC tests for all firm pairs')
    add_common_arguments(parser)
    parser.add_argument('--features', type=str, help='Features CSV written by the features stage')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    output_dir = config.get("run.output_dir")
    features_path = require_path(args.features or os.path.join(output_dir, "features.csv"), "Features CSV")
    features, measures = read_features_csv(features_path, timezone=config.get("bars.timezone"))
    edge_stage = EdgeEstimationStage(config)
    for kind in config.measures():
        results, estimator = edge_stage.run(features, measures, kind)
        edge_stage.export(results, estimator, kind, output_dir)


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
