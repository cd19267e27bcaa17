"""
Synthetic multi-firm trade streams with planted lead-lag influences.

Each firm's per-bar volatility follows a two-state regime. Firms also have
occasional burst bars with a strong one-sided drift (high order-flow
imbalance). A planted influence x -> y raises y's probability of switching
into the high-volatility regime ``lag`` bars after a burst in x, so x's
imbalance-driven variables lead y's realized volatility.
"""

import json
import logging
import os
from dataclasses import asdict
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from .exceptions import ConfigError
from .models import Network, SynthConfig
from .rng import child_rng

logger = logging.getLogger(__name__)

SLOTS_PER_DAY = 13
SLOT_SECONDS = 30 * 60


def symbol_for(i: int) -> str:
    return f"SYN{i:02d}"


def validate_config(cfg: SynthConfig):
    if cfg.n_firms < 1 or cfg.days < 1:
        raise ConfigError("synth needs at least one firm and one day")
    if cfg.trades_per_bar <= 0:
        raise ConfigError("synth.trades_per_bar must be positive")
    if cfg.base_prices is not None and len(cfg.base_prices) != cfg.n_firms:
        raise ConfigError(f"synth.base_prices has {len(cfg.base_prices)} entries for {cfg.n_firms} firms")
    for inf in cfg.influences:
        if not (0 <= inf.source < cfg.n_firms and 0 <= inf.target < cfg.n_firms):
            raise ConfigError(f"influence {inf.source}->{inf.target} names an unknown firm")
        if inf.source == inf.target:
            raise ConfigError(f"influence {inf.source}->{inf.target} is a self-loop")
        if inf.lag < 1:
            raise ConfigError(f"influence {inf.source}->{inf.target} needs lag >= 1, got {inf.lag}")
        if not 0.0 <= inf.strength <= 1.0:
            raise ConfigError(f"influence {inf.source}->{inf.target} strength must lie in [0, 1]")


def _bursts(cfg: SynthConfig, n_bars: int) -> np.ndarray:
    """(n_firms, n_bars) signed burst indicators in {-1, 0, +1}."""
    out = np.zeros((cfg.n_firms, n_bars), dtype=np.int8)
    for i in range(cfg.n_firms):
        rng = child_rng(cfg.seed, "burst", i)
        hit = rng.random(n_bars) < cfg.burst_prob
        sign = np.where(rng.random(n_bars) < 0.5, -1, 1)
        out[i] = np.where(hit, sign, 0)
    return out


def _regimes(cfg: SynthConfig, bursts: np.ndarray) -> np.ndarray:
    """(n_firms, n_bars) regime states, 1 = high volatility."""
    n_bars = bursts.shape[1]
    hazard = np.full((cfg.n_firms, n_bars), cfg.switch_up)
    active = np.abs(bursts).astype(float)
    for inf in cfg.influences:
        hazard[inf.target, inf.lag:] += inf.strength * active[inf.source, :-inf.lag]
    hazard = np.clip(hazard, 0.0, 1.0)

    states = np.zeros((cfg.n_firms, n_bars), dtype=np.int8)
    for i in range(cfg.n_firms):
        u = child_rng(cfg.seed, "regime", i).random(n_bars)
        state = 0
        for t in range(n_bars):
            if state == 0 and u[t] < hazard[i, t]:
                state = 1
            elif state == 1 and u[t] < cfg.switch_down:
                state = 0
            states[i, t] = state
    return states


def _session_starts(cfg: SynthConfig) -> pd.DatetimeIndex:
    days = pd.bdate_range(cfg.start_date, periods=cfg.days)
    opens = days + pd.Timedelta(hours=9, minutes=30)
    offsets = pd.to_timedelta(np.arange(SLOTS_PER_DAY) * SLOT_SECONDS, unit="s")
    starts = (opens.values[:, None] + offsets.values[None, :]).ravel()
    return pd.DatetimeIndex(starts).tz_localize(cfg.timezone)


def _firm_trades(
    cfg: SynthConfig,
    i: int,
    starts: pd.DatetimeIndex,
    regime: np.ndarray,
    burst: np.ndarray,
) -> pd.DataFrame:
    rng = child_rng(cfg.seed, "trades", i)
    n_bars = starts.size
    counts = rng.poisson(cfg.trades_per_bar, size=n_bars)
    if cfg.sparse:
        counts[rng.random(n_bars) < 0.1] = 0
    else:
        counts = np.maximum(counts, 1)

    sigma = cfg.sigma_low * np.where(regime == 1, cfg.vol_ratio, 1.0)
    drift = cfg.burst_drift * cfg.sigma_low * burst
    bar_of_trade = np.repeat(np.arange(n_bars), counts)
    n_trades = bar_of_trade.size

    per_trade_sd = sigma[bar_of_trade] / np.sqrt(counts[bar_of_trade])
    per_trade_drift = drift[bar_of_trade] / counts[bar_of_trade]
    log_price = np.cumsum(per_trade_drift + per_trade_sd * rng.standard_normal(n_trades))
    base = cfg.base_prices[i] if cfg.base_prices is not None else 20.0 + 10.0 * i
    prices = np.round(base * np.exp(log_price), 4)

    lots = 1 + rng.poisson(4, size=n_trades) + 4 * np.abs(burst[bar_of_trade])
    volumes = 100 * lots

    offsets = rng.random(n_trades) * SLOT_SECONDS
    # sort within each bar so trade times stay monotone
    order = np.lexsort((offsets, bar_of_trade))
    seconds = offsets[order]
    times = starts[bar_of_trade] + pd.to_timedelta(np.floor(seconds * 1e6).astype(np.int64), unit="us")

    text = pd.Series(times.strftime("%Y-%m-%dT%H:%M:%S.%f%z"))
    text = text.str[:-2] + ":" + text.str[-2:]
    return pd.DataFrame({
        "symbol": symbol_for(i),
        "timestamp": text.to_numpy(),
        "price": prices,
        "volume": volumes.astype(int),
        "corr": "00",
        "suffix": "",
    })


def firm_metadata(cfg: SynthConfig) -> pd.DataFrame:
    rng = child_rng(cfg.seed, "meta")
    shares = np.round(rng.lognormal(mean=18.0, sigma=1.0, size=cfg.n_firms))
    prices = np.array(cfg.base_prices if cfg.base_prices is not None else [20.0 + 10.0 * i for i in range(cfg.n_firms)])
    return pd.DataFrame({
        "symbol": [symbol_for(i) for i in range(cfg.n_firms)],
        "mcap": shares * prices,
        "sector": [f"sector{i % 3}" for i in range(cfg.n_firms)],
    })


def ground_truth(cfg: SynthConfig) -> Dict[str, Any]:
    return {
        "seed": cfg.seed,
        "edges": [
            {"src": symbol_for(inf.source), "dst": symbol_for(inf.target), "lag": inf.lag, "strength": inf.strength}
            for inf in sorted(cfg.influences, key=lambda x: (x.source, x.target))
        ],
    }


def simulate(cfg: SynthConfig) -> Tuple[Dict[str, pd.DataFrame], np.ndarray]:
    """Per-firm trade frames (bars CSV input schema) and the regime matrix."""
    validate_config(cfg)
    starts = _session_starts(cfg)
    bursts = _bursts(cfg, starts.size)
    regimes = _regimes(cfg, bursts)
    trades = {
        symbol_for(i): _firm_trades(cfg, i, starts, regimes[i], bursts[i])
        for i in range(cfg.n_firms)
    }
    return trades, regimes


def generate(cfg: SynthConfig, output_dir: str) -> Dict[str, Any]:
    """Write one trade CSV per firm plus firms.csv and ground_truth.json."""
    os.makedirs(output_dir, exist_ok=True)
    trades, regimes = simulate(cfg)

    paths: List[str] = []
    for symbol, frame in trades.items():
        path = os.path.join(output_dir, f"{symbol}.csv")
        frame.to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
        logger.info(f"Wrote {len(frame)} synthetic trades for {symbol} to {path}")

    firms_path = os.path.join(output_dir, "firms.csv")
    firm_metadata(cfg).to_csv(firms_path, index=False, lineterminator="\n", float_format="%.2f")

    truth_path = os.path.join(output_dir, "ground_truth.json")
    truth = ground_truth(cfg)
    truth["config"] = {k: v for k, v in asdict(cfg).items() if k != "influences"}
    with open(truth_path, "w", encoding="utf-8") as f:
        json.dump(truth, f, indent=2, sort_keys=True)
        f.write("\n")

    logger.info(f"High-volatility share per firm: {np.round(regimes.mean(axis=1), 3).tolist()}")
    return {"trades": paths, "firms": firms_path, "ground_truth": truth_path}


def edge_recovery(network: Network, truth: Dict[str, Any]) -> Dict[str, List[Tuple[str, str]]]:
    """Compare accepted edges with the planted influences."""
    planted = {(e["src"], e["dst"]) for e in truth.get("edges", [])}
    found = {(e.source, e.target) for e in network.edges}
    return {
        "true_positives": sorted(found & planted),
        "false_positives": sorted(found - planted),
        "missed": sorted(planted - found),
    }
