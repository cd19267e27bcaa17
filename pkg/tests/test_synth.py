"""Tests for the synthetic market generator."""

import json

import numpy as np
import pandas as pd
import pytest

from hftnet.bars import build_bar_series, build_grid, filter_trades, load_trades
from hftnet.exceptions import ConfigError
from hftnet.features import compute_frame
from hftnet.measures import compute_measures
from hftnet.models import (
    EdgeResult, FeatureConfig, FirmNode, ForestParams, Influence, MeasureKind, Network, PairwiseSettings, SynthConfig,
)
from hftnet.network import PairwiseEstimator, build_network, firm_nodes
from hftnet.synth import (
    _bursts, _regimes, edge_recovery, firm_metadata, generate, ground_truth, simulate, symbol_for, validate_config,
)


def planted(source, target):
    return EdgeResult(source=source, target=target, auc1=0.5, auc2=0.6, diff=0.1, s=0.02, d_stat=5.0, p_raw=0.001)


def small_config(**overrides):
    values = dict(n_firms=2, days=5, seed=3)
    values.update(overrides)
    return SynthConfig(**values)


class TestSimulate:

    def test_same_seed_gives_identical_trades(self):
        first, regimes_a = simulate(small_config())
        second, regimes_b = simulate(small_config())
        assert list(first) == ["SYN00", "SYN01"]
        for symbol in first:
            pd.testing.assert_frame_equal(first[symbol], second[symbol])
        np.testing.assert_array_equal(regimes_a, regimes_b)

    def test_different_seed_changes_prices(self):
        first, _ = simulate(small_config(seed=1))
        second, _ = simulate(small_config(seed=2))
        assert not first["SYN00"]["price"].equals(second["SYN00"]["price"])

    def test_prices_are_positive_and_volumes_are_round_lots(self):
        trades, regimes = simulate(small_config())
        assert regimes.shape == (2, 5 * 13)
        assert (trades["SYN00"]["price"] > 0).all()
        assert (trades["SYN00"]["volume"] % 100 == 0).all()

    def test_generated_files_pass_every_filter(self, synthetic_market):
        trades = load_trades(synthetic_market["trades"])
        filtered, report = filter_trades(trades)
        assert len(filtered) == len(trades)
        assert not any(report.dropped.values())
        assert sorted(trades["symbol"].unique()) == ["SYN00", "SYN01", "SYN02"]


class TestInfluence:

    def test_full_strength_forces_the_target_into_the_high_regime(self):
        cfg = small_config(days=20, influences=[Influence(source=0, target=1, lag=1, strength=1.0)])
        bursts = _bursts(cfg, 20 * 13)
        states = _regimes(cfg, bursts)
        hits = np.flatnonzero(bursts[0][:-1] != 0)
        assert hits.size > 0
        for t in hits:
            if states[1, t] == 0:
                assert states[1, t + 1] == 1

    def test_zero_strength_influence_leaves_regimes_unchanged(self):
        cfg = small_config(days=10)
        alone = _regimes(cfg, _bursts(cfg, 130))
        linked_cfg = small_config(days=10, influences=[Influence(source=1, target=0, lag=2, strength=0.0)])
        linked = _regimes(linked_cfg, _bursts(linked_cfg, 130))
        np.testing.assert_array_equal(alone, linked)


class TestValidation:

    @pytest.mark.parametrize("influence", [
        Influence(source=0, target=0, lag=1, strength=0.5),
        Influence(source=0, target=5, lag=1, strength=0.5),
        Influence(source=0, target=1, lag=0, strength=0.5),
        Influence(source=0, target=1, lag=1, strength=1.5),
    ])
    def test_bad_influences_are_rejected(self, influence):
        with pytest.raises(ConfigError):
            validate_config(small_config(influences=[influence]))

    def test_base_prices_must_match_firm_count(self):
        with pytest.raises(ConfigError):
            validate_config(small_config(base_prices=[10.0]))


class TestGroundTruth:

    def test_planted_edges_use_firm_symbols(self):
        cfg = small_config(n_firms=3, influences=[
            Influence(source=2, target=0, lag=3, strength=0.5),
            Influence(source=0, target=1, lag=5, strength=0.9),
        ])
        truth = ground_truth(cfg)
        assert [(e["src"], e["dst"]) for e in truth["edges"]] == [("SYN00", "SYN01"), ("SYN02", "SYN00")]

    def test_written_ground_truth_matches_config(self, synthetic_market):
        with open(synthetic_market["ground_truth"], encoding="utf-8") as f:
            truth = json.load(f)
        assert truth["edges"] == [{"src": "SYN00", "dst": "SYN01", "lag": 5, "strength": 0.9}]
        assert truth["config"]["seed"] == 11

    def test_firm_metadata_has_one_row_per_firm(self):
        meta = firm_metadata(small_config(n_firms=4))
        assert meta["symbol"].tolist() == [symbol_for(i) for i in range(4)]
        assert (meta["mcap"] > 0).all()
        assert meta["sector"].tolist() == ["sector0", "sector1", "sector2", "sector0"]

    def test_edge_recovery_classifies_edges(self):
        network = Network(
            nodes=[FirmNode(id=symbol_for(i)) for i in range(3)],
            edges=[planted("SYN00", "SYN01"), planted("SYN02", "SYN01")],
        )
        truth = {"edges": [{"src": "SYN00", "dst": "SYN01"}, {"src": "SYN01", "dst": "SYN02"}]}
        recovery = edge_recovery(network, truth)
        assert recovery["true_positives"] == [("SYN00", "SYN01")]
        assert recovery["false_positives"] == [("SYN02", "SYN01")]
        assert recovery["missed"] == [("SYN01", "SYN02")]


class TestRegimeVolatility:

    def test_high_regime_bars_are_vol_ratio_times_as_volatile(self):
        cfg = small_config(n_firms=1, days=80, switch_up=0.04, switch_down=0.04, burst_prob=0.0)
        trades, regimes = simulate(cfg)
        frame = trades["SYN00"]
        slot = pd.to_datetime(frame["timestamp"], utc=True, format="ISO8601").dt.floor("30min")
        closes = frame.groupby(slot, sort=True)["price"].last().to_numpy()
        assert closes.size == regimes.shape[1]

        returns = np.diff(np.log(closes))
        state = regimes[0, 1:]
        high, low = returns[state == 1], returns[state == 0]
        assert min(high.size, low.size) >= 300
        assert high.size + low.size >= 500
        ratio = high.std(ddof=1) / low.std(ddof=1)
        assert ratio == pytest.approx(cfg.vol_ratio, rel=0.2)


def estimate_network(cfg, output_dir, trees=200, bootstrap=500):
    paths = generate(cfg, str(output_dir))
    trades, _ = filter_trades(load_trades(paths["trades"]))
    series = build_bar_series(trades, build_grid(trades))
    features = {s: compute_frame(bars, FeatureConfig()) for s, bars in series.items()}
    measures = {s: compute_measures(bars, 50) for s, bars in series.items()}
    settings = PairwiseSettings(forest=ForestParams(trees=trees), bootstrap=bootstrap, seed=cfg.seed, jobs=4)
    estimator = PairwiseEstimator(features, measures, MeasureKind.VOLATILITY, settings)
    results = estimator.run()
    network = build_network(results, nodes=firm_nodes(estimator.tested_firms), alpha=0.05)
    with open(paths["ground_truth"], encoding="utf-8") as f:
        truth = json.load(f)
    return results, network, truth


@pytest.mark.slow
class TestRecovery:

    def test_planted_network_is_recovered(self, tmp_path):
        influences = [
            Influence(source=0, target=1, lag=5, strength=0.9),
            Influence(source=2, target=3, lag=10, strength=0.8),
            Influence(source=4, target=5, lag=5, strength=0.9),
            Influence(source=1, target=4, lag=10, strength=0.8),
        ]
        hits, misses = [], []
        for seed in (1, 2, 3):
            cfg = SynthConfig(n_firms=6, days=126, influences=influences, seed=seed)
            _, network, truth = estimate_network(cfg, tmp_path / f"seed{seed}")
            recovery = edge_recovery(network, truth)
            hits.append(len(recovery["true_positives"]))
            misses.append(len(recovery["false_positives"]))
        assert np.median(hits) >= 3
        assert np.median(misses) <= 1

    def test_planted_pair_has_the_smallest_p_value(self, tmp_path):
        wins = 0
        for seed in (1, 2, 3):
            cfg = SynthConfig(
                n_firms=4, days=126, influences=[Influence(source=0, target=1, lag=10, strength=0.9)], seed=seed,
            )
            results, _, _ = estimate_network(cfg, tmp_path / f"seed{seed}")
            best = min(results, key=lambda r: (r.p_raw, -r.diff))
            wins += (best.source, best.target) == ("SYN00", "SYN01")
        assert wins >= 2
