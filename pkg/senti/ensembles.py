"""CART trees and the three tree ensembles: random forest, AdaBoost and gradient boosting.

Trees are stored as flat preorder arrays. A node with ``feature == -1`` is a leaf whose
``value`` is the weighted mean target of its samples; an internal node sends ``x[feature] <=
threshold`` to ``left``. Classification and regression share the weighted squared-error
criterion: for 0/1 targets it equals half the weighted Gini impurity, so the same split search
serves the classifiers (Gini) and the boosting residual trees.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil, sqrt
from pathlib import Path
from typing import Iterator, List, Optional, Union

import numpy as np
from scipy.special import expit

from senti.corpus import Polarity
from senti.exceptions import CorpusError, DimensionMismatch, InsufficientDocuments

LOGIT_CAP = 15.0


@dataclass
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    max_depth: Optional[int] = None

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max(initial=0))

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of X."""
        X = _dense(X, self.n_features)
        nodes = np.zeros(len(X), dtype=np.int64)
        active = self.feature[nodes] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = nodes[rows]
            goes_left = X[rows, self.feature[current]] <= self.threshold[current]
            nodes[rows] = np.where(goes_left, self.left[current], self.right[current])
            active[rows] = self.feature[nodes[rows]] >= 0
        return nodes

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        """0/1 class decision of a classification tree; 0.5 resolves to positive."""
        return (self.predict_value(X) >= 0.5).astype(np.int64)

    def to_lines(self) -> List[str]:
        lines = [f"tree nodes={self.n_nodes} features={self.n_features}"]
        for node in range(self.n_nodes):
            if self.feature[node] < 0:
                lines.append(f"leaf {float(self.value[node])!r}")
            else:
                lines.append(f"node {int(self.feature[node])} {float(self.threshold[node])!r}")
        return lines

    @classmethod
    def from_lines(cls, lines: Iterator[str]):
        header = _fields(next(lines), "tree")
        builder = _TreeBuilder()
        for _ in range(int(header["nodes"])):
            kind, *rest = next(lines).split()
            if kind == "leaf":
                builder.add_leaf(float(rest[0]))
            elif kind == "node":
                builder.add_split(int(rest[0]), float(rest[1]))
            else:
                raise ValueError(f"unknown tree line kind {kind!r}")
        return builder.build(int(header["features"]))


class _TreeBuilder:
    """Appends nodes in preorder and wires every node to its parent."""

    def __init__(self):
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.value: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        # internal nodes still waiting for a child, with the number of children seen
        self._open: List[List[int]] = []

    def _append(self, feature: int, threshold: float, value: float) -> int:
        node = len(self.feature)
        if self._open:
            parent = self._open[-1]
            if parent[1] == 0:
                self.left[parent[0]] = node
                parent[1] = 1
            else:
                self.right[parent[0]] = node
                self._open.pop()
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.value.append(value)
        self.left.append(-1)
        self.right.append(-1)
        return node

    def add_leaf(self, value: float) -> int:
        return self._append(-1, 0.0, value)

    def add_split(self, feature: int, threshold: float, value: float = 0.0) -> int:
        node = self._append(feature, threshold, value)
        self._open.append([node, 0])
        return node

    def build(self, n_features: int, max_depth: Optional[int] = None) -> DecisionTree:
        if self._open:
            raise ValueError("tree has internal nodes without both children")
        return DecisionTree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=np.float64),
            n_features,
            max_depth,
        )


def _fields(line: str, tag: str) -> dict:
    name, *pairs = line.split()
    if name != tag:
        raise ValueError(f"expected a {tag} header, got {line!r}")
    return dict(pair.split("=", 1) for pair in pairs)


def _dense(X, n_features: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64))
    if X.shape[1] != n_features:
        raise DimensionMismatch("tree input", n_features, X.shape[1])
    return X


def _best_split(X: np.ndarray, target: np.ndarray, weight: np.ndarray, features: np.ndarray):
    """Largest squared-error reduction over the given features; ties go to the lowest feature.

    Returns (gain, feature, threshold), or None when every given feature is constant.
    """
    columns = X[:, features]
    order = np.argsort(columns, axis=0, kind="stable")
    sorted_x = np.take_along_axis(columns, order, axis=0)
    weights = weight[order]
    sums = (weight * target)[order]
    total_weight, total_sum = weight.sum(), weight @ target
    left_weight = np.cumsum(weights, axis=0)[:-1]
    left_sum = np.cumsum(sums, axis=0)[:-1]
    right_weight = total_weight - left_weight
    right_sum = total_sum - left_sum
    valid = (sorted_x[1:] > sorted_x[:-1]) & (right_weight > 0)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = (
            left_sum**2 / left_weight
            + right_sum**2 / np.where(right_weight > 0, right_weight, 1)
            - total_sum**2 / total_weight
        )
    gain = np.where(valid, gain, -np.inf)
    per_feature = gain.max(axis=0)
    best = per_feature.max()
    column = int(np.flatnonzero(per_feature >= best - 1e-12 * (1.0 + abs(best)))[0])
    position = int(np.argmax(gain[:, column]))
    low, high = sorted_x[position, column], sorted_x[position + 1, column]
    threshold = low + (high - low) / 2
    if not low <= threshold < high:
        threshold = low
    return float(best), int(features[column]), float(threshold)


def tree_train(
    X,
    y,
    max_depth: Optional[int] = None,
    features_per_split: Optional[int] = None,
    seed=0,
    sample_weight=None,
) -> DecisionTree:
    """Grow a CART tree greedily.

    A node becomes a leaf when its targets are all equal, at max_depth, with fewer than two
    weighted samples, or when no candidate feature varies. Otherwise it splits even if the best
    split has zero gain, so distinct points can always be separated. With `features_per_split`
    a random subset of that size is searched first; further features are only tried when the
    subset is constant on the node.

    Args:
        X: dense (n, d) matrix.
        y: targets; 0/1 labels for classification, real residuals for regression.
        seed: int or numpy Generator driving the feature subsets.
        sample_weight: non-negative weights; zero-weight rows are ignored.
    """
    X = np.atleast_2d(np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64))
    target = np.asarray(y, dtype=np.float64)
    if len(target) == 0:
        raise InsufficientDocuments("tree training", 1, 0)
    weight = np.ones(len(target)) if sample_weight is None else np.asarray(sample_weight, float)
    n_features = X.shape[1]
    rng = np.random.default_rng(seed)
    builder = _TreeBuilder()
    stack = [(np.flatnonzero(weight > 0), 0)]
    while stack:
        rows, depth = stack.pop()
        node_weight, node_target = weight[rows], target[rows]
        value = float(node_weight @ node_target / node_weight.sum())
        split = None
        if (
            len(rows) >= 2
            and (max_depth is None or depth < max_depth)
            and np.ptp(node_target) > 0
        ):
            node_x = X[rows]
            if features_per_split is None or features_per_split >= n_features:
                chunks = [np.arange(n_features)]
            else:
                shuffled = rng.permutation(n_features)
                chunks = [
                    np.sort(shuffled[:features_per_split]),
                    np.sort(shuffled[features_per_split:]),
                ]
            for chunk in chunks:
                if len(chunk):
                    split = _best_split(node_x, node_target, node_weight, chunk)
                if split is not None:
                    break
        if split is None:
            builder.add_leaf(value)
            continue
        _, feature, threshold = split
        builder.add_split(feature, threshold, value)
        goes_left = X[rows, feature] <= threshold
        # right is pushed first so the left subtree is emitted next (preorder)
        stack.append((rows[~goes_left], depth + 1))
        stack.append((rows[goes_left], depth + 1))
    return builder.build(n_features, max_depth)


@dataclass
class ForestModel:
    trees: List[DecisionTree]
    features_per_split: int
    seed: int

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features


def rf_train(
    X,
    y,
    n_trees: int = 100,
    features_per_split: Optional[int] = None,
    seed: int = 0,
    bootstrap: bool = True,
    max_depth: Optional[int] = None,
    workers: int = 1,
) -> ForestModel:
    """Random forest of bootstrap-sampled CART classifiers.

    Tree t draws its bootstrap sample and feature subsets from seed + t, so the forest does not
    depend on how trees are scheduled across workers.
    """
    X = np.atleast_2d(np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64))
    labels = np.asarray([int(v) for v in y], dtype=np.float64)
    if len(labels) == 0:
        raise InsufficientDocuments("random forest training", 1, 0)
    if n_trees < 1:
        raise ValueError("A forest needs at least one tree")
    k = features_per_split or ceil(sqrt(X.shape[1]))

    def grow(t: int) -> DecisionTree:
        rng = np.random.default_rng(seed + t)
        counts = (
            np.bincount(rng.integers(0, len(labels), len(labels)), minlength=len(labels))
            if bootstrap
            else None
        )
        return tree_train(X, labels, max_depth, k, rng, counts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    logging.info(f"Random forest: {n_trees} trees, {k} features per split")
    return ForestModel(trees, k, seed)


@dataclass
class AdaBoostModel:
    stumps: List[DecisionTree]
    alphas: List[float]
    errors: List[float] = field(default_factory=list)
    bounds: List[float] = field(default_factory=list)
    weight_sums: List[float] = field(default_factory=list)
    n_features: int = 0


def adaboost_train(X, y, rounds: int = 100) -> AdaBoostModel:
    """Discrete AdaBoost over depth-1 stumps.

    Each round fits a stump to the current sample weights and gives it
    alpha = 1/2 ln((1 - eps) / eps). A stump with zero weighted error is kept with alpha 1 and
    ends training; a stump no better than chance (eps >= 0.5) is discarded and ends training.
    `bounds` holds the running product of 2 sqrt(eps (1 - eps)), the training-error bound.
    `weight_sums` records the total sample weight each round's stump was fitted on.
    """
    X = np.atleast_2d(np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64))
    labels = np.asarray([int(v) for v in y], dtype=np.int64)
    if len(labels) == 0:
        raise InsufficientDocuments("AdaBoost training", 1, 0)
    signs = np.where(labels == Polarity.POSITIVE, 1.0, -1.0)
    weights = np.full(len(labels), 1.0 / len(labels))
    model = AdaBoostModel([], [], n_features=X.shape[1])
    bound = 1.0
    for round_no in range(rounds):
        model.weight_sums.append(float(weights.sum()))
        stump = tree_train(X, labels, max_depth=1, sample_weight=weights)
        votes = np.where(stump.predict(X) == Polarity.POSITIVE, 1.0, -1.0)
        error = float(weights[votes != signs].sum())
        if error >= 0.5:
            logging.info(f"AdaBoost stopped at round {round_no + 1}: weighted error {error:.4f}")
            break
        model.errors.append(error)
        if error <= 0.0:
            model.stumps.append(stump)
            model.alphas.append(1.0)
            model.bounds.append(0.0)
            logging.info(f"AdaBoost stopped at round {round_no + 1}: perfect stump")
            break
        alpha = 0.5 * np.log((1.0 - error) / error)
        bound *= 2.0 * np.sqrt(error * (1.0 - error))
        model.stumps.append(stump)
        model.alphas.append(float(alpha))
        model.bounds.append(float(bound))
        weights = weights * np.exp(-alpha * signs * votes)
        weights /= weights.sum()
    if not model.stumps:
        logging.warning("AdaBoost kept no stump; every prediction is positive")
    return model


@dataclass
class GBTModel:
    init_score: float
    trees: List[DecisionTree]
    learning_rate: float
    losses: List[float] = field(default_factory=list)
    n_features: int = 0


def _log_loss(labels: np.ndarray, scores: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, scores) - labels * scores))


def gbt_train(
    X, y, n_trees: int = 100, learning_rate: float = 0.1, max_depth: int = 3, seed: int = 0
) -> GBTModel:
    """Gradient tree boosting on the logistic loss.

    Starts from the log-odds of the positive rate (capped at +-LOGIT_CAP), fits each
    regression tree to the residuals y - p and replaces its leaf values by one Newton step
    sum(r) / sum(p (1 - p)). Single-class data yields the capped prior and no trees.
    `losses` records the mean training log-loss before the first tree and after each tree.
    """
    X = np.atleast_2d(np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64))
    labels = np.asarray([int(v) for v in y], dtype=np.float64)
    if len(labels) == 0:
        raise InsufficientDocuments("gradient boosting training", 1, 0)
    rate = labels.mean()
    with np.errstate(divide="ignore"):
        init = float(np.clip(np.log(rate) - np.log1p(-rate), -LOGIT_CAP, LOGIT_CAP))
    model = GBTModel(init, [], learning_rate, n_features=X.shape[1])
    scores = np.full(len(labels), init)
    model.losses.append(_log_loss(labels, scores))
    if rate in (0.0, 1.0):
        logging.info("Gradient boosting on single-class data: prior only")
        return model
    rng = np.random.default_rng(seed)
    for t in range(n_trees):
        p = expit(scores)
        residuals = labels - p
        tree = tree_train(X, residuals, max_depth=max_depth, seed=rng)
        leaves = tree.apply(X)
        numerator = np.bincount(leaves, weights=residuals, minlength=tree.n_nodes)
        denominator = np.bincount(leaves, weights=p * (1 - p), minlength=tree.n_nodes)
        newton = np.divide(
            numerator, denominator, out=np.zeros(tree.n_nodes), where=denominator > 1e-12
        )
        tree.value = np.where(tree.feature < 0, np.clip(newton, -LOGIT_CAP, LOGIT_CAP), 0.0)
        scores = scores + learning_rate * tree.value[leaves]
        model.trees.append(tree)
        model.losses.append(_log_loss(labels, scores))
        logging.debug(f"GBT tree {t + 1}: training log-loss {model.losses[-1]:.6f}")
    logging.info(f"Gradient boosting: {len(model.trees)} trees, final loss {model.losses[-1]:.4f}")
    return model


EnsembleModel = Union[ForestModel, AdaBoostModel, GBTModel]


def ensemble_scores(model: EnsembleModel, X) -> np.ndarray:
    """Family score per row: forest positive-vote share, AdaBoost margin or GBT probability."""
    X = _dense(X, model.n_features)
    if isinstance(model, ForestModel):
        return np.mean([tree.predict(X) for tree in model.trees], axis=0)
    if isinstance(model, AdaBoostModel):
        margin = np.zeros(len(X))
        for stump, alpha in zip(model.stumps, model.alphas):
            margin += alpha * np.where(stump.predict(X) == Polarity.POSITIVE, 1.0, -1.0)
        return margin
    raw = np.full(len(X), model.init_score)
    for tree in model.trees:
        raw += model.learning_rate * tree.predict_value(X)
    return expit(raw)


def ensemble_predict_many(model: EnsembleModel, X) -> np.ndarray:
    threshold = 0.0 if isinstance(model, AdaBoostModel) else 0.5
    return (ensemble_scores(model, X) >= threshold).astype(np.int64)


def ensemble_predict(model: EnsembleModel, x) -> Polarity:
    return Polarity(int(ensemble_predict_many(model, x)[0]))


def _model_lines(model: EnsembleModel) -> List[str]:
    if isinstance(model, ForestModel):
        lines = [f"forest trees={len(model.trees)} k={model.features_per_split} seed={model.seed}"]
        for tree in model.trees:
            lines.extend(tree.to_lines())
        return lines
    if isinstance(model, AdaBoostModel):
        lines = [f"adaboost stumps={len(model.stumps)} features={model.n_features}"]
        for stump, alpha in zip(model.stumps, model.alphas):
            lines.append(f"alpha {float(alpha)!r}")
            lines.extend(stump.to_lines())
        return lines
    lines = [
        f"gbt trees={len(model.trees)} init={float(model.init_score)!r} "
        f"learning_rate={float(model.learning_rate)!r} features={model.n_features}"
    ]
    for tree in model.trees:
        lines.extend(tree.to_lines())
    return lines


def save_ensemble(model: EnsembleModel, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(_model_lines(model)) + "\n")


def load_ensemble(path: Union[str, Path]) -> EnsembleModel:
    try:
        with open(path, encoding="utf-8") as handle:
            lines = iter(handle.read().splitlines())
        header = next(lines)
        kind = header.split()[0]
        if kind == "forest":
            info = _fields(header, "forest")
            trees = [DecisionTree.from_lines(lines) for _ in range(int(info["trees"]))]
            return ForestModel(trees, int(info["k"]), int(info["seed"]))
        if kind == "adaboost":
            info = _fields(header, "adaboost")
            stumps, alphas = [], []
            for _ in range(int(info["stumps"])):
                alphas.append(float(next(lines).split()[1]))
                stumps.append(DecisionTree.from_lines(lines))
            return AdaBoostModel(stumps, alphas, n_features=int(info["features"]))
        info = _fields(header, "gbt")
        trees = [DecisionTree.from_lines(lines) for _ in range(int(info["trees"]))]
        return GBTModel(
            float(info["init"]),
            trees,
            float(info["learning_rate"]),
            n_features=int(info["features"]),
        )
    except (OSError, ValueError, IndexError, KeyError, StopIteration) as exc:
        raise CorpusError(path, str(exc)) from exc
