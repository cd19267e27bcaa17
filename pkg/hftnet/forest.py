"""
Binary decision trees and random forests grown from scratch.

Trees split on the candidate feature/threshold with maximal information gain,
drawing a fresh subset of m features at every node, and grow until nodes are
pure, hold one row, or no candidate yields a positive gain. Each tree is fit on
a class-weighted bootstrap sample (weights 1/n_pos and 1/n_neg) drawn with an
alias table. Tree k uses the random stream derived from (seed, k).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import entr

from .exceptions import ConfigError, DegenerateError
from .models import Criterion, Dataset, ForestParams, TreeNode
from .rng import child_rng

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
_GAIN_TOL = 1e-12
_LN2 = math.log(2.0)


def impurity(pos_fraction, criterion: Criterion = Criterion.ENTROPY):
    """Binary entropy in bits, or Gini impurity, of the positive-class fraction."""
    p = np.asarray(pos_fraction, dtype=float)
    if criterion is Criterion.GINI:
        return 2.0 * p * (1.0 - p)
    return (entr(p) + entr(1.0 - p)) / _LN2


class AliasSampler:
    """Vose alias table for O(1) draws from a fixed discrete distribution."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        n = weights.size
        scaled = weights / weights.sum() * n
        self.prob = np.ones(n)
        self.alias = np.arange(n)

        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            self.prob[i] = 1.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        column = rng.integers(0, self.prob.size, size=size)
        coin = rng.random(size)
        return np.where(coin < self.prob[column], column, self.alias[column])


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    candidates: Sequence[int],
    criterion: Criterion = Criterion.ENTROPY,
) -> Optional[Tuple[int, float, float]]:
    """Best (feature, split point, gain) among candidate features, or None.

    Thresholds are midpoints between consecutive distinct values. Ties go to
    the lowest feature index, then the lowest threshold.
    """
    labels = y[rows]
    n = labels.size
    if n < 2:
        return None
    n_pos = int((labels == 1).sum())
    if n_pos == 0 or n_pos == n:
        return None
    parent = float(impurity(n_pos / n, criterion))

    best: Optional[Tuple[int, float, float]] = None
    best_gain = _GAIN_TOL
    left_n = np.arange(1, n, dtype=float)
    right_n = n - left_n

    for feature in sorted(int(c) for c in candidates):
        values = X[rows, feature]
        order = np.argsort(values, kind="stable")
        xs = values[order]
        distinct = xs[1:] != xs[:-1]
        if not distinct.any():
            continue
        left_pos = np.cumsum(labels[order] == 1)[:-1]
        right_pos = n_pos - left_pos
        children = (
            left_n * impurity(left_pos / left_n, criterion)
            + right_n * impurity(right_pos / right_n, criterion)
        ) / n
        gain = np.where(distinct, parent - children, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            point = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] <= point < xs[i + 1]:
                point = xs[i]
            best = (feature, float(point), float(gain[i]))
            best_gain = float(gain[i])
    return best


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    m: int,
    rng: np.random.Generator,
    criterion: Criterion = Criterion.ENTROPY,
) -> TreeNode:
    """Grow one unpruned tree on the given (possibly repeated) row indices."""
    p = X.shape[1]
    root = TreeNode()
    stack = [(root, np.asarray(rows, dtype=int))]
    while stack:
        node, idx = stack.pop()
        labels = y[idx]
        node.votes_pos = int((labels == 1).sum())
        node.votes_neg = int(labels.size - node.votes_pos)
        if idx.size <= 1 or node.votes_pos == 0 or node.votes_neg == 0:
            continue

        candidates = rng.choice(p, size=m, replace=False)
        split = best_split(X, y, idx, candidates, criterion)
        if split is None:
            continue
        feature, point, _ = split
        goes_left = X[idx, feature] <= point
        node.split_feature = feature
        node.split_point = point
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.right, idx[~goes_left]))
        stack.append((node.left, idx[goes_left]))
    return root


@dataclass
class FlatTree:
    """Array form of a fitted tree for vectorized traversal."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    prediction: np.ndarray

    @classmethod
    def compile(cls, root: TreeNode) -> "FlatTree":
        nodes: List[TreeNode] = [root]
        links: List[Tuple[int, int]] = []
        i = 0
        while i < len(nodes):
            node = nodes[i]
            if node.is_leaf:
                links.append((-1, -1))
            else:
                nodes.extend([node.left, node.right])
                links.append((len(nodes) - 2, len(nodes) - 1))
            i += 1
        return cls(
            feature=np.array([-1 if n.is_leaf else n.split_feature for n in nodes], dtype=int),
            threshold=np.array([np.nan if n.is_leaf else n.split_point for n in nodes], dtype=float),
            left=np.array([l for l, _ in links], dtype=int),
            right=np.array([r for _, r in links], dtype=int),
            prediction=np.array([n.prediction for n in nodes], dtype=np.int8),
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            current = node[idx]
            goes_left = X[idx, self.feature[current]] <= self.threshold[current]
            node[idx] = np.where(goes_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.prediction[node]


def node_to_dict(node: TreeNode) -> Dict[str, Any]:
    if node.is_leaf:
        return {"neg": node.votes_neg, "pos": node.votes_pos, "pred": node.prediction}
    return {
        "feature": node.split_feature,
        "point": node.split_point,
        "neg": node.votes_neg,
        "pos": node.votes_pos,
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(data: Dict[str, Any]) -> TreeNode:
    node = TreeNode(votes_neg=int(data["neg"]), votes_pos=int(data["pos"]))
    if "feature" in data:
        node.split_feature = int(data["feature"])
        node.split_point = float(data["point"])
        node.left = node_from_dict(data["left"])
        node.right = node_from_dict(data["right"])
    return node


def default_max_features(p: int) -> int:
    return max(1, int(math.isqrt(p)))


@dataclass
class ForestModel:
    """A fitted random forest; immutable after fit_forest returns it."""
    trees: List[TreeNode]
    feature_names: Tuple[str, ...]
    m: int
    seed: int
    class_weights: Dict[str, float]
    criterion: Criterion = Criterion.ENTROPY
    _flat: List[FlatTree] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._flat:
            self._flat = [FlatTree.compile(t) for t in self.trees]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """(K, n) matrix of per-tree class predictions in {-1, +1}."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"Expected {len(self.feature_names)} features ({', '.join(self.feature_names)}), "
                f"got array of shape {X.shape}"
            )
        return np.vstack([flat.predict(X) for flat in self._flat])

    def features_used(self) -> Set[int]:
        used: Set[int] = set()
        for flat in self._flat:
            used.update(int(f) for f in flat.feature[flat.feature >= 0])
        return used

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": MODEL_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "m": self.m,
            "seed": self.seed,
            "criterion": self.criterion.value,
            "class_weights": dict(self.class_weights),
            "trees": [node_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ForestModel":
        if data.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"Unsupported model format version {data.get('version')!r}")
        return cls(
            trees=[node_from_dict(t) for t in data["trees"]],
            feature_names=tuple(data["feature_names"]),
            m=int(data["m"]),
            seed=int(data["seed"]),
            class_weights={k: float(v) for k, v in data["class_weights"].items()},
            criterion=Criterion(data.get("criterion", Criterion.ENTROPY.value)),
        )


def _fit_tree_block(
    X: np.ndarray,
    y: np.ndarray,
    sampler: AliasSampler,
    tree_ids: Sequence[int],
    m: int,
    seed: int,
    criterion: Criterion,
) -> List[TreeNode]:
    trees = []
    for k in tree_ids:
        rng = child_rng(seed, "tree", k)
        sample = sampler.draw(rng, y.size)
        trees.append(fit_tree(X, y, sample, m, rng, criterion))
    return trees


def fit_forest_arrays(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    params: ForestParams = ForestParams(),
    seed: int = 0,
    jobs: int = 1,
) -> ForestModel:
    """Fit K trees on class-weighted bootstrap samples of (X, y)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    p = X.shape[1]
    n_pos = int((y == 1).sum())
    n_neg = int((y == -1).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError(f"Training labels contain a single class (n_pos={n_pos}, n_neg={n_neg})")

    m = params.max_features if params.max_features is not None else default_max_features(p)
    if not 1 <= m <= p:
        raise ConfigError(f"forest.max_features must lie in [1, {p}] for {p} features, got {m}")

    class_weights = {"pos": 1.0 / n_pos, "neg": 1.0 / n_neg}
    sampler = AliasSampler(np.where(y == 1, class_weights["pos"], class_weights["neg"]))

    K = params.trees
    if jobs > 1 and K > 1:
        blocks = [list(range(k, K, jobs)) for k in range(jobs)]
        fitted = Parallel(n_jobs=jobs)(
            delayed(_fit_tree_block)(X, y, sampler, block, m, seed, params.criterion) for block in blocks
        )
        by_id = {k: tree for block, trees in zip(blocks, fitted) for k, tree in zip(block, trees)}
        trees = [by_id[k] for k in range(K)]
    else:
        trees = _fit_tree_block(X, y, sampler, range(K), m, seed, params.criterion)

    logger.debug(f"Fitted {K} trees on {y.size} rows (p={p}, m={m}, n_pos={n_pos}, n_neg={n_neg})")
    return ForestModel(
        trees=trees,
        feature_names=tuple(feature_names),
        m=m,
        seed=seed,
        class_weights=class_weights,
        criterion=params.criterion,
    )


def fit_forest(data: Dataset, params: ForestParams = ForestParams(), seed: int = 0, jobs: int = 1) -> ForestModel:
    """Fit a forest on a Dataset; m defaults to floor(sqrt(p))."""
    return fit_forest_arrays(data.X, data.y, data.feature_names, params, seed, jobs)


def predict_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Fraction of trees voting +1 for each row."""
    votes = model.tree_predictions(X)
    return (votes == 1).sum(axis=0) / model.n_trees
