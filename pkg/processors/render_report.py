#!/usr/bin/env python3
"""
Report stage: density, degree tables and ROC curves from already written
networks and pair scores. No model is refit here.
"""

import argparse
import glob
import logging
import os
import sys
from typing import Dict, List, Optional

import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, run_stage

from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter
from hftnet.exceptions import DataError
from hftnet.evaluation import roc_frame_for
from hftnet.models import Network
from hftnet.network import degrees, density, read_network_json

logger = logging.getLogger(__name__)


class ReportRenderer:
    """Summarizes networks found under an output directory."""

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        self.exporter = CSVExporter(output_dir)

    def find_networks(self) -> List[str]:
        paths = sorted(glob.glob(os.path.join(self.output_dir, "**", "network_*.json"), recursive=True))
        paths = [p for p in paths if not p.endswith("_subset.json")]
        if not paths:
            raise DataError(f"No network_*.json files under {self.output_dir}")
        return paths

    def density_row(self, network: Network, path: str) -> Dict:
        window = os.path.basename(os.path.dirname(path))
        start, _, end = window.partition("_") if window.count("_") == 1 else ("", "", "")
        return {
            "window_start": start or None,
            "window_end": end or None,
            "measure": network.measure,
            "density": density(network),
            "n_firms": len(network.nodes),
            "n_edges": len(network.edges),
            "manifest_id": network.manifest_id,
        }

    def roc_curves(self, network: Network, scores_path: str, target_dir: str) -> int:
        """ROC points of Model 1 and Model 2 for every accepted edge."""
        if not os.path.exists(scores_path):
            logger.warning(f"No pair scores at {scores_path}; ROC curves skipped")
            return 0
        scores = pd.read_csv(scores_path, dtype={"src": str, "dst": str})
        written = 0
        for edge in network.edges:
            pair = scores[(scores["src"] == edge.source) & (scores["dst"] == edge.target)]
            if pair.empty:
                continue
            for model, column in (("model1", "p1"), ("model2", "p2")):
                frame = roc_frame_for(pair[column].to_numpy(), pair["label"].to_numpy())
                if frame is None:
                    continue
                name = f"roc_{network.measure}_{edge.source}_{edge.target}_{model}.csv"
                CSVExporter(target_dir).export_roc(frame, name)
                written += 1
        return written

    def run(self) -> str:
        rows = []
        for path in self.find_networks():
            network = read_network_json(path)
            directory = os.path.dirname(path)
            rows.append(self.density_row(network, path))
            CSVExporter(directory).export_degrees(degrees(network), f"degrees_{network.measure}.csv")
            n_roc = self.roc_curves(network, os.path.join(directory, f"scores_{network.measure}.csv"), directory)
            logger.info(
                f"{path}: density {rows[-1]['density']:.4f} ({len(network.edges)} edges), {n_roc} ROC curves"
            )
        rows.sort(key=lambda r: (r["window_start"] or "", r["measure"] or ""))
        return self.exporter.export_density_series(rows)


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Render density, degree and ROC tables')
    add_common_arguments(parser)
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    ReportRenderer(config.get("run.output_dir")).run()


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
