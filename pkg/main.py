#!/usr/bin/env python3
"""
hftnet - Cross-Predictability Network Pipeline - Master Orchestrator

Builds directed networks among firms from high-frequency trades:
1. Aggregate trades into 30-minute bars on a shared session grid
2. Compute microstructure variables (Roll, Roll impact, Kyle, Amihud, VPIN)
   and market measures (realized volatility, excess kurtosis)
3. For every ordered firm pair, compare a random forest using the target's
   own variables with one that adds the source's, via a bootstrap AUC test
4. Keep FDR-significant pairs as edges and report density and degrees

Every stage can also be run on its own from processors/.
"""

import argparse
import sys
from typing import List, Optional

from processors import (
    assemble_dataset,
    build_bars,
    build_network,
    compute_features,
    estimate_edges,
    generate_synthetic,
    render_report,
    run_windows,
)
from processors.common import run_stage

SUBCOMMANDS = {
    "synth": (generate_synthetic, "Generate synthetic multi-firm trade data"),
    "bars": (build_bars, "Aggregate trades into 30-minute bars"),
    "features": (compute_features, "Compute microstructure variables and measures"),
    "dataset": (assemble_dataset, "Assemble a labeled dataset for one target firm"),
    "edges": (estimate_edges, "Test Model 1 vs Model 2 for every ordered firm pair"),
    "network": (build_network, "Apply FDR and export the network"),
    "report": (render_report, "Density, degree and ROC tables from stored results"),
    "run": (run_windows, "Full pipeline over every configured window"),
}


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="hftnet",
        description="Cross-predictability networks from high-frequency trades",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synth --firms 4 --days 60 --influence 0>1:10:0.9 --output-dir data
  python main.py run --trades data/SYN*.csv --firms data/firms.csv --output-dir results
  python main.py run --config hftnet.example.toml --jobs 4 --measure vol --measure kurt
  python main.py report --output-dir results
        """
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (module, help_text) in SUBCOMMANDS.items():
        subparser = subparsers.add_parser(name, help=help_text, description=help_text)
        module.build_parser(subparser)
        subparser.set_defaults(stage=module.stage)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns 0, 2 (config), 3 (data), 4 (degenerate) or 130."""
    args = parse_arguments(argv)
    return run_stage(args.stage, args)


if __name__ == "__main__":
    sys.exit(main())
