#!/usr/bin/env python3
"""
Synthetic market generator stage.

Writes one TAQ-like trade CSV per firm, firms.csv (market cap, sector) and
ground_truth.json with the planted influences.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from processors.common import add_common_arguments, run_stage

from hftnet.config import PipelineConfig
from hftnet.exceptions import ConfigError
from hftnet.models import Influence
from hftnet.synth import generate

logger = logging.getLogger(__name__)


def parse_influence(text: str) -> Influence:
    """``SRC>DST[:LAG[:STRENGTH]]`` with firm indices, e.g. ``0>1:10:0.9``."""
    try:
        pair, *rest = text.split(":")
        source, target = (int(v) for v in pair.split(">"))
        lag = int(rest[0]) if rest else 10
        strength = float(rest[1]) if len(rest) > 1 else 0.9
    except ValueError as e:
        raise ConfigError(f"Invalid influence {text!r}: expected SRC>DST[:LAG[:STRENGTH]]") from e
    return Influence(source=source, target=target, lag=lag, strength=strength)


class SyntheticDataGenerator:
    """Produces synthetic trade files from the synth config section."""

    def __init__(self, config: PipelineConfig):
        self.config = config

    def run(
        self,
        output_dir: str,
        n_firms: Optional[int] = None,
        days: Optional[int] = None,
        influences: Optional[List[Influence]] = None,
        sparse: bool = False,
    ) -> Dict[str, Any]:
        cfg = self.config.synth_config()
        if n_firms is not None:
            cfg = replace(cfg, n_firms=n_firms)
        if days is not None:
            cfg = replace(cfg, days=days)
        if influences:
            cfg = replace(cfg, influences=influences)
        if sparse:
            cfg = replace(cfg, sparse=True)

        logger.info(
            f"Generating {cfg.n_firms} firms x {cfg.days} days (seed {cfg.seed}, "
            f"{len(cfg.influences)} planted influences) into {output_dir}"
        )
        return generate(cfg, output_dir)


def build_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    parser = parser or argparse.ArgumentParser(description='Generate synthetic multi-firm trade data')
    add_common_arguments(parser)
    parser.add_argument('--firms', type=int, help='Number of firms')
    parser.add_argument('--days', type=int, help='Number of trading days')
    parser.add_argument('--influence', action='append', default=[], help='Planted influence SRC>DST[:LAG[:STRENGTH]]')
    parser.add_argument('--sparse', action='store_true', help='Allow empty bars')
    return parser


def stage(config: PipelineConfig, args: argparse.Namespace):
    SyntheticDataGenerator(config).run(
        output_dir=config.get("run.output_dir"),
        n_firms=args.firms,
        days=args.days,
        influences=[parse_influence(text) for text in args.influence],
        sparse=args.sparse,
    )


def main(argv: Optional[List[str]] = None) -> int:
    return run_stage(stage, build_parser().parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
