"""
Shared command-line plumbing for the stage processors.
"""

import argparse
import logging
import os
import sys
from typing import Callable, Optional

# Add the parent directory to the Python path so stages run as scripts too
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from hftnet.config import PipelineConfig
from hftnet.exceptions import ConfigError, HftnetError
from hftnet.logging_utils import setup_logging

logger = logging.getLogger(__name__)

# CLI flag -> (config key, type)
FLAG_OVERRIDES = {
    "seed": ("run.seed", int),
    "jobs": ("run.jobs", int),
    "output_dir": ("run.output_dir", str),
    "alpha": ("network.alpha", float),
    "trees": ("forest.trees", int),
    "boot": ("evaluation.bootstrap", int),
    "lookback": ("features.lookback", int),
    "horizon": ("measures.horizon", int),
    "min_rows": ("measures.min_rows", int),
    "split": ("evaluation.split", str),
}


def add_common_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument('--config', '-c', type=str, help='Path to a TOML or JSON configuration file')
    parser.add_argument('--seed', type=int, help='Master random seed')
    parser.add_argument('--jobs', type=int, help='Worker processes for trees, bootstrap blocks and pairs')
    parser.add_argument('--output-dir', type=str, help='Directory for outputs')
    parser.add_argument('--alpha', type=float, help='FDR level for accepting edges (default 0.05)')
    parser.add_argument('--trees', type=int, help='Trees per forest (default 1000)')
    parser.add_argument('--boot', type=int, help='Bootstrap replicates for the AUC test (default 2000)')
    parser.add_argument('--lookback', type=int, help='Lookback window W in bars (default 50)')
    parser.add_argument('--horizon', type=int, help='Forecast horizon h in bars (default 50)')
    parser.add_argument('--min-rows', type=int, help='Minimum usable rows per dataset (default 200)')
    parser.add_argument('--split', type=str,
                        help='purged:G=6,purge=5d or chrono:frac=0.5,purge=5d')
    parser.add_argument('--measure', action='append', choices=['vol', 'kurt'],
                        help='Target measure; repeat for both')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging level (default INFO)')
    parser.add_argument('--event-log', type=str, help='Write a JSONL event log to this path')
    parser.add_argument('--verbose', '-v', action='store_true', help='Shortcut for --log-level DEBUG')
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then --config file, then environment, then flags."""
    config = PipelineConfig(getattr(args, "config", None))
    for flag, (key, cast) in FLAG_OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            config.set(key, cast(value))
    if getattr(args, "measure", None):
        config.set("network.measures", sorted(set(args.measure)))
    if getattr(args, "verbose", False):
        config.set("run.log_level", "DEBUG")
    elif getattr(args, "log_level", None):
        config.set("run.log_level", args.log_level)
    if getattr(args, "event_log", None):
        config.set("run.event_log", args.event_log)
    config.validate()
    return config


def run_stage(stage: Callable[[PipelineConfig, argparse.Namespace], None], args: argparse.Namespace) -> int:
    """Run a stage and map pipeline errors to exit codes (2 config, 3 data, 4 degenerate)."""
    try:
        config = config_from_args(args)
    except ConfigError as e:
        setup_logging("INFO", log_file=None)
        logger.error(f"Configuration error: {e}")
        return e.exit_code

    setup_logging(
        config.get("run.log_level"),
        log_file=config.get("run.log_file"),
        event_log=config.get("run.event_log"),
    )
    try:
        stage(config, args)
        return 0
    except KeyboardInterrupt:
        logger.warning("Interrupted by user")
        return 130
    except HftnetError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


def require_path(path: Optional[str], what: str) -> str:
    if not path or not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path
