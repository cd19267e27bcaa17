"""
Directed cross-predictability networks.

An edge x -> y is accepted when adding firm x's microstructure variables to
firm y's own (Model 2 vs Model 1) significantly raises the out-of-sample AUC
for the sign of y's market-measure change, after Benjamini-Hochberg
correction over all ordered pairs of one window and measure.
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import date
from itertools import permutations
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from networkx.drawing.nx_pydot import write_dot

from .evaluation import (
    CrossFit, bootstrap_auc_test, cross_fit_mda, cross_fit_predict, grouped_mda, make_splits,
)
from .exceptions import DataError, DegenerateError, HftnetError
from .measures import assemble
from .models import (
    AucTestResult, CROSS_SUFFIX, EdgeResult, FeatureFrame, FirmNode, MdaReport, MeasureKind, MeasureSeries,
    Network, PairwiseSettings, SizeGroupSeries, SplitMode, SplitPlan, SplitSettings,
)
from .rng import derive_seed

logger = logging.getLogger(__name__)

SIZE_GROUP_FEATURES = ("roll", "amihud", "vpin")


def bh_adjust(p_values: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted


# Pairwise estimation

@dataclass
class TargetScores:
    """Model 1 out-of-sample scores for one target firm."""
    symbol: str
    plan: SplitPlan
    bar_index: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    n_rows: int


def _tested(data_bar_index: np.ndarray, labels: np.ndarray, fit: CrossFit):
    rows = fit.test_rows
    return data_bar_index[rows], labels[rows], fit.scores[rows]


def _fit_model1(
    symbol: str,
    features: FeatureFrame,
    measures: MeasureSeries,
    kind: MeasureKind,
    settings: PairwiseSettings,
) -> TargetScores:
    data = assemble(
        features, measures, kind, settings.horizon, min_rows=settings.min_rows, feature_set=settings.feature_set,
    )
    plan = make_splits(data.timestamps, settings.split)
    fit = cross_fit_predict(data, plan, settings.forest, seed=derive_seed(settings.seed, "model1", kind.value, symbol))
    bar_index, labels, scores = _tested(data.bar_index, data.y, fit)
    return TargetScores(symbol, plan, bar_index, labels, scores, len(data))


def _estimate_pair(
    source: str,
    target: str,
    model1: TargetScores,
    target_features: FeatureFrame,
    target_measures: MeasureSeries,
    source_features: FeatureFrame,
    kind: MeasureKind,
    settings: PairwiseSettings,
) -> Tuple[Optional[EdgeResult], Optional[pd.DataFrame], Optional[AucTestResult], Optional[str]]:
    try:
        data = assemble(
            target_features, target_measures, kind, settings.horizon,
            cross=source_features, min_rows=settings.min_rows, feature_set=settings.feature_set,
        )
        plan = model1.plan.project(data.timestamps)
        fit = cross_fit_predict(
            data, plan, settings.forest, seed=derive_seed(settings.seed, "model2", kind.value, source, target),
        )
        bar_index2, labels2, scores2 = _tested(data.bar_index, data.y, fit)

        common, i1, i2 = np.intersect1d(model1.bar_index, bar_index2, assume_unique=True, return_indices=True)
        if common.size == 0:
            raise DataError("Model 1 and Model 2 share no test rows")
        labels = model1.labels[i1]
        if not np.array_equal(labels, labels2[i2]):
            raise DataError("Model 1 and Model 2 disagree on labels of shared rows")

        test = bootstrap_auc_test(
            model1.scores[i1],
            scores2[i2],
            labels,
            B=settings.bootstrap,
            seed=derive_seed(settings.seed, "boot", kind.value, source, target),
            block_size=settings.bootstrap_block,
            max_redraws=settings.max_redraws,
        )
    except HftnetError as e:
        return None, None, None, f"{type(e).__name__}: {e}"

    edge = EdgeResult(
        source=source,
        target=target,
        auc1=test.auc1,
        auc2=test.auc2,
        diff=test.diff,
        s=test.s,
        d_stat=test.d_stat,
        p_raw=test.p_value,
        n_test=int(common.size),
        fold_mode=settings.split.mode.value,
        degenerate=test.degenerate,
    )
    scores = pd.DataFrame({
        "src": source,
        "dst": target,
        "bar_index": common.astype(int),
        "label": labels.astype(int),
        "p1": model1.scores[i1],
        "p2": scores2[i2],
    })
    return edge, scores, test, None


class PairwiseEstimator:
    """Runs Model 1 per target and Model 2 per ordered pair for one measure."""

    def __init__(
        self,
        features: Mapping[str, FeatureFrame],
        measures: Mapping[str, MeasureSeries],
        kind: MeasureKind,
        settings: PairwiseSettings = PairwiseSettings(),
    ):
        self.features = dict(features)
        self.measures = dict(measures)
        self.kind = kind
        self.settings = settings
        self.skipped: Dict[str, str] = {}
        self.model1: Dict[str, TargetScores] = {}
        self.scores: Optional[pd.DataFrame] = None
        self.tests: Dict[Tuple[str, str], AucTestResult] = {}

    @property
    def tested_firms(self) -> List[str]:
        """Firms whose Model 1 was fitted; the nodes of this measure's network."""
        return sorted(self.model1)

    def _parallel(self, tasks: List) -> List:
        if self.settings.jobs > 1 and len(tasks) > 1:
            return Parallel(n_jobs=self.settings.jobs)(tasks)
        return [fn(*args, **kwargs) for fn, args, kwargs in tasks]

    def fit_targets(self) -> Dict[str, TargetScores]:
        """Model 1 for every firm; firms whose dataset cannot be built are excluded."""
        symbols = sorted(set(self.features) & set(self.measures))
        for symbol in sorted(set(self.features) ^ set(self.measures)):
            self.skipped[symbol] = "missing features or measures"

        def attempt(symbol):
            try:
                return symbol, _fit_model1(symbol, self.features[symbol], self.measures[symbol], self.kind, self.settings), None
            except HftnetError as e:
                return symbol, None, f"{type(e).__name__}: {e}"

        outcomes = self._parallel([delayed(attempt)(s) for s in symbols])
        for symbol, scores, reason in outcomes:
            if scores is None:
                self.skipped[symbol] = reason
                logger.warning(f"Excluding {symbol} ({self.kind.value}): {reason}")
            else:
                self.model1[symbol] = scores
        return self.model1

    def run(self) -> List[EdgeResult]:
        """EdgeResults for every ordered pair of usable firms, sorted by (source, target)."""
        if not self.model1:
            self.fit_targets()
        firms = sorted(self.model1)
        if len(firms) < 2:
            raise DataError(f"Need at least 2 usable firms, have {len(firms)}: {firms}")

        pairs = list(permutations(firms, 2))
        logger.info(f"Estimating {len(pairs)} pair tests for {len(firms)} firms ({self.kind.value})")
        tasks = [
            delayed(_estimate_pair)(
                x, y, self.model1[y], self.features[y], self.measures[y], self.features[x], self.kind, self.settings,
            )
            for x, y in pairs
        ]
        outcomes = self._parallel(tasks)

        results, frames = [], []
        for (x, y), (edge, scores, test, reason) in zip(pairs, outcomes):
            if edge is None:
                self.skipped[f"{x}->{y}"] = reason
                logger.warning(f"Skipping pair {x}->{y} ({self.kind.value}): {reason}")
                continue
            logger.debug(f"{x}->{y}: auc1={edge.auc1:.4f} auc2={edge.auc2:.4f} p={edge.p_raw:.4g}")
            results.append(edge)
            frames.append(scores)
            self.tests[(x, y)] = test

        if not results:
            raise DegenerateError(f"Every pair test failed for measure {self.kind.value}")
        results.sort(key=lambda e: (e.source, e.target))
        self.scores = pd.concat(frames, ignore_index=True).sort_values(["src", "dst", "bar_index"], kind="stable")
        return results


def pairwise_edges(
    features: Mapping[str, FeatureFrame],
    measures: Mapping[str, MeasureSeries],
    kind: MeasureKind,
    settings: PairwiseSettings = PairwiseSettings(),
) -> List[EdgeResult]:
    return PairwiseEstimator(features, measures, kind, settings).run()


# Network construction and analytics

def apply_fdr(results: Sequence[EdgeResult]) -> List[EdgeResult]:
    """Set p_adjusted on every result by BH over the whole set."""
    adjusted = bh_adjust([r.p_raw for r in results])
    for result, q in zip(results, adjusted):
        result.p_adjusted = float(q)
    return list(results)


def build_network(
    results: Sequence[EdgeResult],
    nodes: Optional[Sequence[FirmNode]] = None,
    alpha: float = 0.05,
    measure: Optional[str] = None,
    seed: Optional[int] = None,
) -> Network:
    """Keep results whose BH-adjusted p-value is at most alpha and whose AUC gain is positive."""
    results = apply_fdr(results)
    if nodes is None:
        ids = sorted({r.source for r in results} | {r.target for r in results})
        nodes = [FirmNode(id=i) for i in ids]
    edges = []
    for r in results:
        if r.p_adjusted > alpha:
            continue
        if not r.diff > 0:
            logger.debug(f"Excluding {r.source}->{r.target}: p_adj={r.p_adjusted:.4g} but diff={r.diff:.4g}")
            continue
        edges.append(r)
    logger.info(f"Accepted {len(edges)} of {len(results)} edges at alpha={alpha}")
    return Network(nodes=sorted(nodes, key=lambda n: n.id), edges=edges, alpha=alpha, measure=measure, seed=seed)


def to_digraph(network: Network) -> nx.DiGraph:
    graph = nx.DiGraph()
    for node in network.nodes:
        attrs = {}
        if node.mcap is not None:
            attrs["mcap"] = float(node.mcap)
        if node.sector is not None:
            attrs["sector"] = node.sector
        graph.add_node(node.id, **attrs)
    for edge in network.edges:
        graph.add_edge(edge.source, edge.target, weight=float(edge.diff), auc1=float(edge.auc1),
                       auc2=float(edge.auc2), p_adj=float(edge.p_adjusted))
    return graph


def density(network: Network) -> float:
    """Realized edges over N(N-1) possible directed edges."""
    n = len(network.nodes)
    if n < 2:
        return 0.0
    return len(network.edges) / (n * (n - 1))


def _standardize(values: np.ndarray) -> Tuple[np.ndarray, bool]:
    if values.size < 2:
        return np.zeros(values.size), True
    sd = values.std(ddof=1)
    if sd == 0:
        return np.zeros(values.size), True
    return (values - values.mean()) / sd, False


def degrees(network: Network) -> pd.DataFrame:
    """In/out degree per firm and their z-scores within this network."""
    graph = to_digraph(network)
    ids = network.node_ids
    in_deg = np.array([graph.in_degree(i) for i in ids], dtype=float)
    out_deg = np.array([graph.out_degree(i) for i in ids], dtype=float)
    std_in, flat_in = _standardize(in_deg)
    std_out, flat_out = _standardize(out_deg)
    if flat_in or flat_out:
        logger.debug(f"Degree spread is zero (in={flat_in}, out={flat_out}); standardized degrees set to 0")
    frame = pd.DataFrame({
        "firm": ids,
        "in_degree": in_deg.astype(int),
        "out_degree": out_deg.astype(int),
        "std_in": std_in,
        "std_out": std_out,
    })
    frame.attrs["degenerate"] = {"in": flat_in, "out": flat_out}
    return frame


def top_k(degree_frame: pd.DataFrame, k: int = 10, by: str = "std_out") -> pd.DataFrame:
    """The k firms with the largest value of ``by``; ties broken by firm id."""
    ordered = degree_frame.sort_values([by, "firm"], ascending=[False, True], kind="stable")
    return ordered.head(k).reset_index(drop=True)


def subnetwork(network: Network, node_ids: Iterable[str]) -> Network:
    """Induced subnetwork on the given firms; node tags and edge weights preserved."""
    keep = set(node_ids)
    return Network(
        nodes=[n for n in network.nodes if n.id in keep],
        edges=[e for e in network.edges if e.source in keep and e.target in keep],
        alpha=network.alpha,
        measure=network.measure,
        seed=network.seed,
        config_hash=network.config_hash,
        manifest_id=network.manifest_id,
    )


# Firm selection, windows and size groups

def rank_by_market_cap(meta: pd.DataFrame, top_n: int, per_sector: bool = True) -> List[str]:
    """Largest firms by market cap, either overall or within each sector."""
    if "mcap" not in meta.columns:
        raise DataError("Firm metadata has no mcap column")
    ordered = meta.dropna(subset=["mcap"]).sort_values(["mcap", "symbol"], ascending=[False, True], kind="stable")
    if per_sector:
        if "sector" not in ordered.columns:
            raise DataError("Firm metadata has no sector column")
        ordered = ordered.groupby("sector", sort=True, group_keys=False).head(top_n)
    else:
        ordered = ordered.head(top_n)
    return sorted(ordered["symbol"].astype(str))


def yearly_windows(years: Iterable[int]) -> List[Tuple[date, date]]:
    """Three overlapping six-month windows per year: Jan-Jun, Apr-Sep, Jul-Dec."""
    windows = []
    for year in years:
        windows.append((date(year, 1, 1), date(year, 6, 30)))
        windows.append((date(year, 4, 1), date(year, 9, 30)))
        windows.append((date(year, 7, 1), date(year, 12, 31)))
    return windows


def size_groups(
    meta: pd.DataFrame,
    small_decile: int = 7,
    large_decile: int = 1,
    n_deciles: int = 10,
) -> Dict[str, List[str]]:
    """Members of the small and large groups; decile 1 holds the largest firms."""
    firms = meta.dropna(subset=["mcap"])
    if len(firms) < n_deciles:
        raise DataError(f"Need at least {n_deciles} firms with market caps to form deciles, have {len(firms)}")
    rank = firms["mcap"].rank(ascending=False, method="first")
    decile = pd.qcut(rank, n_deciles, labels=range(1, n_deciles + 1)).astype(int)
    return {
        "small": sorted(firms.loc[decile == small_decile, "symbol"].astype(str)),
        "large": sorted(firms.loc[decile == large_decile, "symbol"].astype(str)),
    }


def value_weighted_series(
    group: str,
    frames: Mapping[str, pd.DataFrame],
    weights: Mapping[str, float],
    columns: Sequence[str],
) -> SizeGroupSeries:
    """Market-cap weighted average of each column across members at every bar.

    Weights are renormalized over the members with a value at that bar; a bar
    where every member is missing stays missing.
    """
    members = sorted(frames)
    if not members:
        raise DataError(f"Group {group} has no members")
    for m in members:
        if not weights.get(m, 0) > 0:
            raise DataError(f"Group {group}: member {m} needs a positive weight")
    bar_index = frames[members[0]]["bar_index"].to_numpy()
    for m in members[1:]:
        if not np.array_equal(frames[m]["bar_index"].to_numpy(), bar_index):
            raise DataError(f"Group {group}: {m} is not on the same grid as {members[0]}")

    w = np.array([weights[m] for m in members], dtype=float)
    out = pd.DataFrame({"bar_index": bar_index})
    for column in columns:
        values = np.column_stack([frames[m][column].to_numpy(dtype=float) for m in members])
        present = ~np.isnan(values)
        weight_sum = (present * w).sum(axis=1)
        total = (np.where(present, values, 0.0) * w).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[column] = np.where(weight_sum > 0, total / weight_sum, np.nan)
    return SizeGroupSeries(group=group, frame=out, weights={m: float(weights[m]) for m in members})


def aggregate_group(
    group: str,
    features: Mapping[str, FeatureFrame],
    measures: Mapping[str, MeasureSeries],
    weights: Mapping[str, float],
    feature_set: Sequence[str] = SIZE_GROUP_FEATURES,
) -> Tuple[FeatureFrame, MeasureSeries]:
    """Value-weighted features and measures of a group, usable as one synthetic firm."""
    members = sorted(set(features) & set(measures))
    weighted_features = value_weighted_series(group, {m: features[m].frame for m in members}, weights, feature_set)
    weighted_measures = value_weighted_series(group, {m: measures[m].frame for m in members}, weights, ("sigma", "kurt"))

    first = measures[members[0]]
    measure_frame = weighted_measures.frame.copy()
    measure_frame.insert(1, "slot_start", first.frame["slot_start"].array)
    reference = features[members[0]]
    return (
        FeatureFrame(
            symbol=group,
            frame=weighted_features.frame,
            lookback=reference.lookback,
            bvc_sigma_mode=reference.bvc_sigma_mode,
        ),
        MeasureSeries(symbol=group, frame=measure_frame, lookback=first.lookback),
    )


def size_group_scenarios(
    small: Tuple[FeatureFrame, MeasureSeries],
    large: Tuple[FeatureFrame, MeasureSeries],
    settings: PairwiseSettings = PairwiseSettings(),
    n_groups: int = 10,
    mda_repeats: int = 1,
    mda_reports: Optional[Dict[str, MdaReport]] = None,
) -> pd.DataFrame:
    """Small vs large group study: each group's volatility and kurtosis change,
    predicted from its own features (Model 1) and with the other group's added
    (Model 2), under purged cross-validation. Model 2's MDA is averaged per group;
    the per-fold reports land in ``mda_reports`` under ``<target>_<measure>``.
    """
    split = SplitSettings(mode=SplitMode.PURGED_CV, n_groups=n_groups, purge_days=settings.split.purge_days)
    feature_set = tuple(f for f in settings.feature_set if f in SIZE_GROUP_FEATURES) or SIZE_GROUP_FEATURES
    forest = settings.forest
    if forest.max_features is not None and forest.max_features > len(feature_set):
        forest = replace(forest, max_features=len(feature_set))
    groups = {"small": small, "large": large}
    rows = []
    for target_name in ("small", "large"):
        other_name = "large" if target_name == "small" else "small"
        target_features, target_measures = groups[target_name]
        other_features, _ = groups[other_name]
        for kind in (MeasureKind.VOLATILITY, MeasureKind.KURTOSIS):
            seed = derive_seed(settings.seed, "size", target_name, kind.value)
            own = assemble(target_features, target_measures, kind, settings.horizon,
                           min_rows=settings.min_rows, feature_set=feature_set)
            both = assemble(target_features, target_measures, kind, settings.horizon, cross=other_features,
                            min_rows=settings.min_rows, feature_set=feature_set)
            plan = make_splits(own.timestamps, split)
            fit1 = cross_fit_predict(own, plan, forest, seed=derive_seed(seed, "model1"), jobs=settings.jobs)
            fit2 = cross_fit_predict(both, plan.project(both.timestamps), forest,
                                     seed=derive_seed(seed, "model2"), jobs=settings.jobs)

            common, i1, i2 = np.intersect1d(own.bar_index[fit1.test_rows], both.bar_index[fit2.test_rows],
                                            assume_unique=True, return_indices=True)
            test = bootstrap_auc_test(
                fit1.scores[fit1.test_rows][i1],
                fit2.scores[fit2.test_rows][i2],
                own.y[fit1.test_rows][i1],
                B=settings.bootstrap,
                seed=derive_seed(seed, "boot"),
                block_size=settings.bootstrap_block,
                max_redraws=settings.max_redraws,
                jobs=settings.jobs,
            )
            report = cross_fit_mda(both, fit2, seed=derive_seed(seed, "mda"), repeats=mda_repeats)
            if mda_reports is not None:
                mda_reports[f"{target_name}_{kind.value}"] = report
            membership = {
                target_name: list(feature_set),
                other_name: [f"{f}{CROSS_SUFFIX}" for f in feature_set],
            }
            by_group = grouped_mda(report, membership).groupby("group")["mda"].mean()
            rows.append({
                "target": target_name,
                "measure": kind.value,
                "auc1": test.auc1,
                "auc2": test.auc2,
                "diff": test.diff,
                "p": test.p_value,
                "n_test": int(common.size),
                "mda_small": float(by_group.get("small", np.nan)),
                "mda_large": float(by_group.get("large", np.nan)),
            })
            logger.info(
                f"Size scenario {target_name}/{kind.value}: auc1={test.auc1:.4f} auc2={test.auc2:.4f} "
                f"p={test.p_value:.4g}"
            )
    return pd.DataFrame(rows)


# Exports

def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def network_to_dict(network: Network) -> Dict[str, Any]:
    nodes = []
    for node in network.nodes:
        entry: Dict[str, Any] = {"id": node.id}
        if node.mcap is not None:
            entry["mcap"] = float(node.mcap)
        if node.sector is not None:
            entry["sector"] = node.sector
        nodes.append(entry)
    return {
        "nodes": nodes,
        "edges": [{k: _finite_or_none(v) for k, v in e.to_dict().items()} for e in network.edges],
        "alpha": network.alpha,
        "measure": network.measure,
        "seed": network.seed,
        "config_hash": network.config_hash,
        "manifest_id": network.manifest_id,
        "density": density(network),
    }


def write_network_json(network: Network, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network_to_dict(network), f, indent=2, sort_keys=True)
        f.write("\n")


def _nan_if_none(value: Any) -> float:
    return float("nan") if value is None else value


def read_network_json(path: str) -> Network:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    edges = []
    for item in data.get("edges", []):
        edge = EdgeResult.from_dict({k: _nan_if_none(v) if k in ("s", "d") else v for k, v in item.items()})
        edges.append(edge)
    return Network(
        nodes=[FirmNode(id=n["id"], mcap=n.get("mcap"), sector=n.get("sector")) for n in data.get("nodes", [])],
        edges=edges,
        alpha=data.get("alpha", 0.05),
        measure=data.get("measure"),
        seed=data.get("seed"),
        config_hash=data.get("config_hash"),
        manifest_id=data.get("manifest_id"),
    )


def write_graphml(network: Network, path: str):
    nx.write_graphml(to_digraph(network), path)


def write_dot_file(network: Network, path: str):
    """DOT export; node size proportional to market cap when known."""
    graph = to_digraph(network)
    caps = [d["mcap"] for _, d in graph.nodes(data=True) if "mcap" in d]
    largest = max(caps) if caps else None
    for _, data in graph.nodes(data=True):
        if largest and "mcap" in data:
            data["width"] = f"{0.3 + 1.2 * data['mcap'] / largest:.3f}"
    for _, _, data in graph.edges(data=True):
        data["weight"] = f"{data['weight']:.6f}"
        data.pop("auc1", None)
        data.pop("auc2", None)
        data.pop("p_adj", None)
    write_dot(graph, path)


def firm_nodes(symbols: Iterable[str], meta: Optional[pd.DataFrame] = None) -> List[FirmNode]:
    """FirmNodes tagged with market cap and sector when metadata is available."""
    lookup: Dict[str, Dict[str, Any]] = {}
    if meta is not None and "symbol" in meta.columns:
        lookup = meta.set_index(meta["symbol"].astype(str)).to_dict("index")
    nodes = []
    for symbol in sorted(symbols):
        info = lookup.get(symbol, {})
        mcap = info.get("mcap")
        sector = info.get("sector")
        nodes.append(FirmNode(
            id=symbol,
            mcap=float(mcap) if mcap is not None and not pd.isna(mcap) else None,
            sector=str(sector) if sector is not None and not pd.isna(sector) else None,
        ))
    return nodes
