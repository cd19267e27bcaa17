"""
Model evaluation: ROC/AUC, the paired bootstrap AUC-difference test,
permutation importances (MDA) and time-based train/test splitting.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import norm, rankdata

from .exceptions import DataError, DegenerateError, SplitError
from .forest import ForestModel, fit_forest, predict_proba
from .models import (
    AucTestResult, Dataset, Fold, ForestParams, MdaReport, RocResult, SplitMode, SplitPlan, SplitSettings,
)
from .rng import child_rng, derive_seed

logger = logging.getLogger(__name__)

NS_PER_DAY = 86_400 * 10**9
MIN_REPLICATES = 100


# ROC / AUC

def _class_counts(labels: np.ndarray):
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    return pos, n_pos, n_neg


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-statistic AUC with ties counted as one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos, n_pos, n_neg = _class_counts(labels)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError(f"AUC needs both classes (n_pos={n_pos}, n_neg={n_neg})")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _auc_rows(scores: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Row-wise AUC of a (replicates, n) score matrix against a boolean class matrix."""
    ranks = rankdata(scores, axis=1)
    n_pos = pos.sum(axis=1)
    n_neg = pos.shape[1] - n_pos
    rank_sum = np.where(pos, ranks, 0.0).sum(axis=1)
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> RocResult:
    """ROC curve over every distinct score plus its rank-form AUC."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos, n_pos, n_neg = _class_counts(labels)
    auc = auc_score(scores, labels)

    order = np.argsort(-scores, kind="stable")
    ordered = scores[order]
    cut = np.r_[np.flatnonzero(np.diff(ordered) != 0), ordered.size - 1]
    tps = np.cumsum(pos[order])[cut]
    fps = cut + 1 - tps

    return RocResult(
        fpr=np.r_[0.0, fps / n_neg],
        tpr=np.r_[0.0, tps / n_pos],
        thresholds=np.r_[np.inf, ordered[cut]],
        auc=auc,
        n_pos=n_pos,
        n_neg=n_neg,
    )


def trapezoid_area(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float((np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0).sum())


def roc_points_frame(roc: RocResult) -> pd.DataFrame:
    return pd.DataFrame({"fpr": roc.fpr, "tpr": roc.tpr, "threshold": roc.thresholds})


def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction classified correctly when +1 is predicted for score >= threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    predicted = np.where(scores >= threshold, 1, -1)
    return float((predicted == labels).mean())


# Paired bootstrap test

def _bootstrap_block(
    p1: np.ndarray,
    p2: np.ndarray,
    labels: np.ndarray,
    seed: int,
    block: int,
    size: int,
    max_redraws: int,
) -> np.ndarray:
    rng = child_rng(seed, "boot", block)
    n = labels.size
    is_pos = labels == 1
    idx = rng.integers(0, n, size=(size, n))
    n_pos = is_pos[idx].sum(axis=1)
    for row in np.flatnonzero((n_pos == 0) | (n_pos == n)):
        for _ in range(max_redraws):
            idx[row] = rng.integers(0, n, size=n)
            k = int(is_pos[idx[row]].sum())
            if 0 < k < n:
                break
        else:
            raise DegenerateError(
                f"Bootstrap replicate kept drawing a single class after {max_redraws} redraws"
            )
    pos = is_pos[idx]
    return _auc_rows(p2[idx], pos) - _auc_rows(p1[idx], pos)


def bootstrap_auc_test(
    p1: np.ndarray,
    p2: np.ndarray,
    labels: np.ndarray,
    B: int = 2000,
    seed: int = 0,
    block_size: int = 100,
    max_redraws: int = 100,
    jobs: int = 1,
) -> AucTestResult:
    """One-sided test that model 2's AUC exceeds model 1's on the same rows.

    Rows are resampled jointly as (p1_i, p2_i, label_i) triples. Replicates are
    drawn in fixed blocks whose streams depend only on (seed, block), so the
    result does not depend on the number of workers.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    labels = np.asarray(labels)
    if not (p1.shape == p2.shape == labels.shape):
        raise ValueError(f"Score and label lengths differ: {p1.shape}, {p2.shape}, {labels.shape}")
    if B < MIN_REPLICATES:
        raise ValueError(f"B must be at least {MIN_REPLICATES}, got {B}")

    auc1 = auc_score(p1, labels)
    auc2 = auc_score(p2, labels)
    diff = auc2 - auc1

    sizes = [min(block_size, B - start) for start in range(0, B, block_size)]
    tasks = (
        delayed(_bootstrap_block)(p1, p2, labels, seed, block, size, max_redraws)
        for block, size in enumerate(sizes)
    )
    if jobs > 1 and len(sizes) > 1:
        blocks = Parallel(n_jobs=jobs)(tasks)
    else:
        blocks = [fn(*args, **kwargs) for fn, args, kwargs in tasks]
    replicate_diffs = np.concatenate(blocks)

    s = float(replicate_diffs.std(ddof=1))
    if s > 0 and math.isfinite(s):
        d_stat = diff / s
        p_value = float(norm.sf(d_stat))
        degenerate = False
    else:
        d_stat = float("nan")
        p_value = 1.0 if diff <= 0 else 0.0
        degenerate = True
        logger.debug(f"Bootstrap differences have zero spread (diff={diff:.6f}); p set to {p_value}")

    return AucTestResult(
        auc1=auc1,
        auc2=auc2,
        diff=diff,
        s=s,
        d_stat=d_stat,
        p_value=min(max(p_value, 0.0), 1.0),
        B=B,
        seed=seed,
        degenerate=degenerate,
        replicate_diffs=replicate_diffs,
    )


def replicate_histogram(result: AucTestResult, bins: int = 50) -> pd.DataFrame:
    """Counts of the bootstrap AUC differences over equal-width bins."""
    if result.replicate_diffs is None or result.replicate_diffs.size == 0:
        raise DataError("Test result carries no bootstrap replicates")
    counts, edges = np.histogram(result.replicate_diffs, bins=bins)
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts.astype(int)})


# Splitting

def _as_ns(timestamps) -> np.ndarray:
    return pd.DatetimeIndex(timestamps).asi8


def _boundary_ns(plan: SplitPlan) -> List[tuple]:
    return [(lo.value, hi.value) for lo, hi in plan.boundaries]


def _folds_from_boundaries(
    t: np.ndarray,
    boundaries: Sequence[tuple],
    settings: SplitSettings,
    tz,
) -> List[Fold]:
    purge = int(round(settings.purge_days * NS_PER_DAY))
    last_index = len(boundaries) - 1
    folds = []
    for g, (lo, hi) in enumerate(boundaries):
        last = g == last_index
        in_test = (t >= lo) & ((t <= hi) if last else (t < hi))
        before = t < lo - purge
        if settings.mode is SplitMode.CHRONOLOGICAL:
            after = np.zeros_like(before)
        elif last:
            after = t > hi + purge
        else:
            after = t >= hi + purge
        test = np.flatnonzero(in_test)
        train = np.flatnonzero((before | after) & ~in_test)
        if test.size == 0 or train.size == 0:
            raise SplitError(
                f"Fold {g} has an empty {'test' if test.size == 0 else 'train'} set "
                f"({train.size} train / {test.size} test rows)",
                fold=g,
            )
        folds.append(Fold(
            index=g,
            train=train,
            test=test,
            test_start=pd.Timestamp(int(t[test].min()), tz="UTC").tz_convert(tz),
            test_end=pd.Timestamp(int(t[test].max()), tz="UTC").tz_convert(tz),
        ))
    return folds


def make_splits(timestamps: pd.DatetimeIndex, settings: SplitSettings = SplitSettings()) -> SplitPlan:
    """Purged G-interval cross-validation or a single purged chronological split.

    purged: the sample span is cut into G equal wall-clock intervals; each is the
    test set once and training rows within purge_days of it are dropped.
    chrono: the first train_fraction of the span trains (minus purge_days at its
    end), the rest tests.
    """
    index = pd.DatetimeIndex(timestamps)
    if index.size == 0:
        raise SplitError("Cannot split an empty sample")
    if not index.is_monotonic_increasing:
        raise DataError("Timestamps must be sorted before splitting")
    t = index.asi8
    start, end = int(t[0]), int(t[-1])
    tz = index.tz or "UTC"

    if settings.mode is SplitMode.PURGED_CV:
        edges = np.round(np.linspace(start, end, settings.n_groups + 1)).astype(np.int64)
        edges[0], edges[-1] = start, end
        boundaries = list(zip(edges[:-1].tolist(), edges[1:].tolist()))
    else:
        cut = start + int(round(settings.train_fraction * (end - start)))
        boundaries = [(cut, end)]

    folds = _folds_from_boundaries(t, boundaries, settings, tz)
    as_ts = tuple(
        (pd.Timestamp(lo, tz="UTC").tz_convert(tz), pd.Timestamp(hi, tz="UTC").tz_convert(tz))
        for lo, hi in boundaries
    )
    plan = SplitPlan(settings=settings, folds=tuple(folds), boundaries=as_ts)
    logger.debug(
        f"Split {index.size} rows into {len(folds)} fold(s) ({settings.mode.value}, "
        f"purge={settings.purge_days}d): " + ", ".join(f"{f.train.size}/{f.test.size}" for f in folds)
    )
    return plan


def project_splits(plan: SplitPlan, timestamps: pd.DatetimeIndex) -> SplitPlan:
    """Apply an existing plan's wall-clock fold boundaries to another set of rows."""
    index = pd.DatetimeIndex(timestamps)
    folds = _folds_from_boundaries(index.asi8, _boundary_ns(plan), plan.settings, index.tz or "UTC")
    return SplitPlan(settings=plan.settings, folds=tuple(folds), boundaries=plan.boundaries)


# Cross-fitting

@dataclass
class CrossFit:
    """Out-of-sample scores of one dataset under a split plan."""
    scores: np.ndarray
    tested: np.ndarray
    models: List[ForestModel]
    plan: SplitPlan

    @property
    def test_rows(self) -> np.ndarray:
        return np.flatnonzero(self.tested)


def cross_fit_predict(
    data: Dataset,
    plan: SplitPlan,
    params: ForestParams = ForestParams(),
    seed: int = 0,
    jobs: int = 1,
) -> CrossFit:
    """Fit one forest per fold on its train rows and score its test rows.

    With purged CV the test sets partition the sample, so the pooled scores
    form a single out-of-sample prediction per row.
    """
    scores = np.full(len(data), np.nan)
    tested = np.zeros(len(data), dtype=bool)
    models = []
    for fold in plan.folds:
        model = fit_forest(data.take(fold.train), params, seed=derive_seed(seed, "fold", fold.index), jobs=jobs)
        scores[fold.test] = predict_proba(model, data.X[fold.test])
        tested[fold.test] = True
        models.append(model)
        logger.debug(
            f"{data.task.target} fold {fold.index}: trained on {fold.train.size}, tested {fold.test.size}"
        )
    return CrossFit(scores=scores, tested=tested, models=models, plan=plan)


# Permutation importance

def mda(
    model: ForestModel,
    X_test: np.ndarray,
    y_test: np.ndarray,
    seed: int = 0,
    repeats: int = 1,
    fold: int = 0,
) -> MdaReport:
    """Relative accuracy drop after permuting each feature's test column."""
    X_test = np.asarray(X_test, dtype=float)
    y_test = np.asarray(y_test)
    baseline = accuracy(predict_proba(model, X_test), y_test)
    if not baseline > 0:
        raise DegenerateError(f"Fold {fold}: baseline accuracy is {baseline}; MDA is undefined")

    rows = []
    for j, name in enumerate(model.feature_names):
        drops = []
        for r in range(repeats):
            permuted = X_test.copy()
            permuted[:, j] = X_test[child_rng(seed, "mda", fold, j, r).permutation(len(y_test)), j]
            drops.append((baseline - accuracy(predict_proba(model, permuted), y_test)) / baseline)
        rows.append({"fold": fold, "feature": name, "mda": float(np.mean(drops))})

    return MdaReport(
        per_fold=pd.DataFrame(rows, columns=["fold", "feature", "mda"]),
        baseline_accuracy={fold: baseline},
        repeats=repeats,
    )


def combine_mda(reports: Sequence[MdaReport]) -> MdaReport:
    if not reports:
        raise DegenerateError("No fold produced an MDA report")
    baseline: Dict[int, float] = {}
    for report in reports:
        baseline.update(report.baseline_accuracy)
    return MdaReport(
        per_fold=pd.concat([r.per_fold for r in reports], ignore_index=True),
        baseline_accuracy=baseline,
        repeats=reports[0].repeats,
    )


def cross_fit_mda(data: Dataset, fit: CrossFit, seed: int = 0, repeats: int = 1) -> MdaReport:
    """MDA of every fold model on its own test rows; folds with zero accuracy are skipped."""
    reports = []
    for fold, model in zip(fit.plan.folds, fit.models):
        try:
            reports.append(mda(model, data.X[fold.test], data.y[fold.test], seed, repeats, fold.index))
        except DegenerateError as e:
            logger.warning(f"{data.task.target}: skipping MDA for fold {fold.index}: {e}")
    return combine_mda(reports)


def grouped_mda(report: MdaReport, groups: Mapping[str, Sequence[str]]) -> pd.DataFrame:
    """Per-fold mean MDA of each named feature group (columns fold, group, mda)."""
    known = set(report.per_fold["feature"])
    rows = []
    for group, members in groups.items():
        unknown = sorted(set(members) - known)
        if unknown:
            raise DataError(f"Group {group!r} names unknown features {unknown}")
        subset = report.per_fold[report.per_fold["feature"].isin(list(members))]
        for fold, values in subset.groupby("fold", sort=True)["mda"]:
            rows.append({"fold": int(fold), "group": group, "mda": float(values.mean())})
    return pd.DataFrame(rows, columns=["fold", "group", "mda"])


def roc_frame_for(scores: np.ndarray, labels: np.ndarray) -> Optional[pd.DataFrame]:
    """ROC points for plotting, or None when only one class is present."""
    try:
        return roc_points_frame(roc_auc(scores, labels))
    except DegenerateError:
        return None
