#!/usr/bin/env python3
"""
Network stage: pair tests -> BH-adjusted edge set -> JSON / DOT / GraphML and degrees.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, require_path, run_stage

from hftnet.config import PipelineConfig
from hftnet.csv_exporter import CSVExporter, read_edges_csv
from hftnet.exceptions import DataError
from hftnet.models import EdgeResult, MeasureKind, Network
from hftnet.network import (
    build_network,
    degrees,
    firm_nodes,
    subnetwork,
    top_k,
    write_dot_file,
    write_graphml,
    write_network_json,
)

logger = logging.getLogger(__name__)


def load_firm_metadata(path: Optional[str]) -> Optional[pd.DataFrame]:
    """firms.csv with symbol, mcap and sector columns, or None when not configured."""
    if not path:
        return None
    if not os.path.exists(path):
        raise DataError(f"Firm metadata file not found: {path}")
    meta = pd.read_csv(path, dtype={"symbol": str, "sector": str})
    if "symbol" not in meta.columns:
        raise DataError(f"{path} has no symbol column")
    return meta


class NetworkBuilder:
    """Applies FDR to pair results and writes the network in every export format."""

    def __init__(self, config: PipelineConfig, meta: Optional[pd.DataFrame] = None):
        self.config = config
        self.meta = meta

    def run(self, results: Sequence[EdgeResult], kind: MeasureKind, symbols: Optional[Sequence[str]] = None,
            manifest_id: Optional[str] = None) -> Network:
        if symbols is None:
            symbols = sorted({r.source for r in results} | {r.target for r in results})
        network = build_network(
            results,
            nodes=firm_nodes(symbols, self.meta),
            alpha=self.config.get("network.alpha"),
            measure=kind.value,
            seed=self.config.get("run.seed"),
        )
        network.config_hash = self.config.config_hash()
        network.manifest_id = manifest_id
        return network

    def export(self, network: Network, output_dir: str, suffix: str = "") -> Dict[str, str]:
        stem = f"network_{network.measure}{suffix}"
        paths = {
            "json": os.path.join(output_dir, f"{stem}.json"),
            "dot": os.path.join(output_dir, f"{stem}.dot"),
            "graphml": os.path.join(output_dir, f"{stem}.graphml"),
        }
        os.makedirs(output_dir, exist_ok=True)
        write_network_json(network, paths["json"])
        write_dot_file(network, paths["dot"])
        write_graphml(network, paths["graphml"])

        degree_frame = degrees(network)
        paths["degrees"] = CSVExporter(output_dir).export_degrees(degree_frame, f"degrees_{network.measure}{suffix}.csv")
        k = self.config.get("network.top_k")
        if k and not degree_frame.empty:
            leaders = ", ".join(top_k(degree_frame, k)["firm"])
            logger.info(f"Top {k} firms by standardized out-degree ({network.measure}): {leaders}")
        return paths

    def export_with_subset(self, network: Network, output_dir: str) -> Dict[str, str]:
        paths = self.export(network, output_dir)
        subset = self.config.get("network.subset") or []
        if subset:
            missing = sorted(set(subset) - set(network.node_ids))
            if missing:
                logger.warning(f"Subset firms not in the network: {missing}")
            paths.update({f"subset_{k}": v for k, v in
                          self.export(subnetwork(network, subset), output_dir, suffix="_subset").items()})
        return paths


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Build the FDR-controlled cross-predictability network')
    add_common_arguments(parser)
    parser.add_argument('--edges', type=str, help='Edges CSV (default <output-dir>/edges_<measure>.csv)')
    parser.add_argument('--firms', type=str, help='Firm metadata CSV with symbol, mcap, sector')
    parser.add_argument('--subset', nargs='+', help='Also export the subnetwork induced by these firms')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    output_dir = config.get("run.output_dir")
    if args.subset:
        config.set("network.subset", list(args.subset))
    builder = NetworkBuilder(config, load_firm_metadata(args.firms or config.get("run.firms_file")))
    for kind in config.measures():
        edges_path = require_path(args.edges or os.path.join(output_dir, f"edges_{kind.value}.csv"), "Edges CSV")
        network = builder.run(read_edges_csv(edges_path), kind)
        builder.export_with_subset(network, output_dir)


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
