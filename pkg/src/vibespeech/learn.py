"""Classifiers: random forest, single decision tree, multinomial logistic.

The forest follows the classic recipe: each tree grows on a seeded bootstrap
sample, considers a random feature subset at every node (``floor(log2 d)+1``
by default), and splits on maximal information gain with an entropy
criterion.  Leaves keep raw class counts; prediction averages the normalized
leaf distributions across trees, which is also the confidence used by the
keyword-search stage.  Everything is deterministic given the seed: the
per-tree random stream depends only on (seed, tree index), so parallel and
sequential training agree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureVector, LabeledDataset

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    bag_fraction: float = 1.0
    features_per_split: int = 0     # 0 -> floor(log2 d) + 1
    min_leaf: int = 1
    min_variance_split: float = 1e-3  # node entropy floor below which we stop
    max_depth: int = 0              # 0 -> unlimited
    seed: int = 1
    criterion: str = "entropy"      # "gini" available, non-default

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not (0 < self.bag_fraction <= 1):
            raise ValueError("bag_fraction must lie in (0, 1]")
        if self.features_per_split < 0:
            raise ValueError("features_per_split must be >= 0 (0 means the log2 rule)")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 (0 means unlimited)")
        if self.criterion not in ("entropy", "gini"):
            raise ValueError(f"unknown split criterion {self.criterion!r}")


@dataclass(frozen=True)
class LogisticConfig:
    l2_penalty: float = 1e-4
    max_epochs: int = 500
    grad_tol: float = 1e-6
    seed: int = 1

    def __post_init__(self):
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float
    distribution: np.ndarray  # aligned with the model's label_vocab


class _Tree:
    """Flattened decision tree: parallel node arrays, -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.counts = [np.asarray(c, dtype=np.float64) for c in counts]

    def leaf_for_rows(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.feature[node[rows]] >= 0
        return node


def _impurity(counts: np.ndarray, criterion: str) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    if criterion == "gini":
        return float(1.0 - np.sum(p * p))
    return float(-np.sum(p * np.log2(p)))


def _xlog2x(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    np.log2(v, out=out, where=v > 0)
    return v * out


def _children_impurity(counts: np.ndarray, totals: np.ndarray, criterion: str) -> np.ndarray:
    """total * impurity for count blocks; shape (..., C) -> (...)."""
    if criterion == "gini":
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(totals > 0, np.sum(counts * counts, axis=-1) / totals, 0.0)
        return totals - s
    # n*H = n*log2(n) - sum_c c*log2(c)
    return _xlog2x(totals) - np.sum(_xlog2x(counts), axis=-1)


def _best_split(X, y, idx, feats, n_classes, min_leaf, criterion):
    """Scan candidate thresholds of the given features for the max-gain split.

    All features are handled in one vectorized pass.  The winner is the
    first maximal gain in (feature index, threshold) order, so ties resolve
    to the lowest feature index, then the lowest threshold.  Returns
    (gain, feature, threshold) with gain <= 0 when nothing usable.
    """
    m = len(idx)
    node_counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
    node_imp = _impurity(node_counts, criterion)

    V = X[np.ix_(idx, feats)]                                # (m, k)
    order = np.argsort(V, axis=0, kind="stable")
    vs = np.take_along_axis(V, order, axis=0)
    ys = y[idx][order]                                       # (m, k)

    onehot = np.zeros((m, len(feats), n_classes))
    np.put_along_axis(onehot, ys[:, :, None], 1.0, axis=2)
    prefix = np.cumsum(onehot, axis=0)[:-1]                  # left counts after row i

    left_n = np.arange(1, m, dtype=np.float64)[:, None]      # (m-1, 1)
    right_n = m - left_n
    valid = (vs[:-1] < vs[1:]) & (left_n >= min_leaf) & (right_n >= min_leaf)
    if not np.any(valid):
        return 0.0, -1, 0.0

    children = _children_impurity(prefix, np.broadcast_to(left_n, vs[:-1].shape), criterion)
    children = children + _children_impurity(
        node_counts - prefix, np.broadcast_to(right_n, vs[:-1].shape), criterion
    )
    gains = np.where(valid, node_imp - children / m, -np.inf)

    # feature-major flatten so argmax ties break on (feature, threshold) order
    flat = int(np.argmax(gains.T))
    f_pos, i = divmod(flat, m - 1)
    best_gain = float(gains[i, f_pos])
    if best_gain <= 0.0:
        return 0.0, -1, 0.0
    a, b = float(vs[i, f_pos]), float(vs[i + 1, f_pos])
    thr = a + (b - a) / 2.0
    if not (a < thr < b):  # midpoint collapsed onto a neighbor
        thr = a
    return best_gain, int(feats[f_pos]), thr


def _grow_tree(X, y, rows, n_classes, cfg: ForestConfig, k_features, rng) -> _Tree:
    d = X.shape[1]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(())
        return len(feature) - 1

    stack = [(new_node(), rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        node_counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        stop = (
            np.count_nonzero(node_counts) <= 1
            or len(idx) < 2 * cfg.min_leaf
            or (cfg.max_depth and depth >= cfg.max_depth)
            or _impurity(node_counts, cfg.criterion) <= cfg.min_variance_split
        )
        if not stop:
            if k_features >= d:
                feats = np.arange(d)
            else:
                feats = np.sort(rng.choice(d, size=k_features, replace=False))
            gain, f, thr = _best_split(
                X, y, idx, feats, n_classes, cfg.min_leaf, cfg.criterion
            )
            stop = gain <= 0.0
        if stop:
            counts[node] = node_counts
            continue
        go_left = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        # push right first so the left child is grown (and numbered) first
        rid = new_node()
        lid = new_node()
        left[node], right[node] = lid, rid
        stack.append((rid, idx[~go_left], depth + 1))
        stack.append((lid, idx[go_left], depth + 1))
    return _Tree(feature, threshold, left, right, counts)


@dataclass(frozen=True, eq=False)
class ForestModel:
    kind: str  # "forest" | "tree"
    trees: tuple[_Tree, ...]
    config: ForestConfig
    label_vocab: tuple[str, ...]
    feature_names: tuple[str, ...]

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Per-row class distribution, averaged over the trees."""
        X = np.asarray(X, dtype=np.float64)
        dist = np.zeros((X.shape[0], len(self.label_vocab)))
        for tree in self.trees:
            leaves = tree.leaf_for_rows(X)
            for node in np.unique(leaves):
                c = tree.counts[node]
                total = c.sum()
                dist[leaves == node] += c / total if total > 0 else 1.0 / len(c)
        return dist / len(self.trees)


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def resolve_features_per_split(configured: int, d: int) -> int:
    if configured == 0:
        return min(d, int(math.floor(math.log2(d))) + 1) if d > 1 else 1
    return min(configured, d)


def train_forest(ds: LabeledDataset, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    """Grow a bagged ensemble on the dataset; deterministic given cfg.seed."""
    X = ds.matrix
    y = ds.label_indices()
    n, d = X.shape
    if d == 0:
        raise ValueError("dataset has no features")
    n_classes = len(ds.label_vocab)
    k = resolve_features_per_split(cfg.features_per_split, d)
    bag = max(1, math.ceil(cfg.bag_fraction * n))
    trees = []
    for i in range(cfg.n_trees):
        rng = _tree_rng(cfg.seed, i)
        rows = rng.integers(0, n, size=bag)
        trees.append(_grow_tree(X, y, rows, n_classes, cfg, k, rng))
    return ForestModel(
        kind="forest",
        trees=tuple(trees),
        config=cfg,
        label_vocab=ds.label_vocab,
        feature_names=ds.feature_names,
    )


def train_tree(ds: LabeledDataset, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    """Single unbagged tree considering every feature at each split."""
    X = ds.matrix
    y = ds.label_indices()
    n, d = X.shape
    if d == 0:
        raise ValueError("dataset has no features")
    tree = _grow_tree(
        X, y, np.arange(n), len(ds.label_vocab), cfg, d, _tree_rng(cfg.seed, 0)
    )
    return ForestModel(
        kind="tree",
        trees=(tree,),
        config=cfg,
        label_vocab=ds.label_vocab,
        feature_names=ds.feature_names,
    )


def predict(model, fv: FeatureVector) -> Prediction:
    """Label + confidence + full distribution for one feature vector."""
    if tuple(fv.names) != tuple(model.feature_names):
        raise ValueError("feature names do not match the model")
    dist = model.predict_matrix(fv.values[None, :])[0]
    best = int(np.argmax(dist))  # vocab is sorted, so ties go lexicographic
    return Prediction(
        label=model.label_vocab[best],
        confidence=float(dist[best]),
        distribution=dist,
    )


def predict_labels(model, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(label indices, confidences) for a feature matrix."""
    dist = model.predict_matrix(X)
    idx = np.argmax(dist, axis=1)
    return idx, dist[np.arange(len(idx)), idx]


# ---------------------------------------------------------------------------
# Multinomial logistic baseline


@dataclass(frozen=True, eq=False)
class LogisticModel:
    kind: str
    weights: np.ndarray      # (d+1, C), last row is the bias
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    config: LogisticConfig
    label_vocab: tuple[str, ...]
    feature_names: tuple[str, ...]

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=np.float64) - self.feature_mean) / self.feature_scale
        logits = Xs @ self.weights[:-1] + self.weights[-1]
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)


def softmax_loss_and_grad(W, X1, onehot, l2):
    """Mean cross-entropy + L2 on the non-bias rows, with its gradient."""
    n = X1.shape[0]
    logits = X1 @ W
    logits = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(logits), axis=1))
    loss = float(np.mean(logz - np.sum(logits * onehot, axis=1)))
    loss += 0.5 * l2 * float(np.sum(W[:-1] ** 2))
    p = np.exp(logits - logz[:, None])
    grad = X1.T @ (p - onehot) / n
    grad[:-1] += l2 * W[:-1]
    return loss, grad


def train_logistic(ds: LabeledDataset, cfg: LogisticConfig = LogisticConfig()) -> LogisticModel:
    """Full-batch gradient descent on the softmax objective.

    Features are standardized internally; the step size comes from the
    curvature bound 0.5 * lambda_max(X'X)/n + l2, which keeps plain descent
    stable without a line search.
    """
    X = ds.matrix
    y = ds.label_indices()
    n, d = X.shape
    n_classes = len(ds.label_vocab)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    X1 = np.hstack([(X - mean) / scale, np.ones((n, 1))])
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    lam_max = float(np.linalg.eigvalsh(X1.T @ X1 / n)[-1])
    step = 1.0 / (0.5 * lam_max + cfg.l2_penalty)

    W = np.zeros((d + 1, n_classes))
    for _ in range(cfg.max_epochs):
        _, grad = softmax_loss_and_grad(W, X1, onehot, cfg.l2_penalty)
        if float(np.linalg.norm(grad)) < cfg.grad_tol:
            break
        W -= step * grad
    return LogisticModel(
        kind="logistic",
        weights=W,
        feature_mean=mean,
        feature_scale=scale,
        config=cfg,
        label_vocab=ds.label_vocab,
        feature_names=ds.feature_names,
    )


# ---------------------------------------------------------------------------
# Model serialization (versioned JSON; floats round-trip via repr)


def _tree_to_jsonable(tree: _Tree) -> dict:
    return {
        "feature": [int(v) for v in tree.feature],
        "threshold": [float(v) for v in tree.threshold],
        "left": [int(v) for v in tree.left],
        "right": [int(v) for v in tree.right],
        "counts": [[float(c) for c in row] for row in tree.counts],
    }


def _tree_from_jsonable(obj: dict) -> _Tree:
    return _Tree(obj["feature"], obj["threshold"], obj["left"], obj["right"], obj["counts"])


def save_model(model, path) -> None:
    if isinstance(model, ForestModel):
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "kind": model.kind,
            "config": {
                "n_trees": model.config.n_trees,
                "bag_fraction": model.config.bag_fraction,
                "features_per_split": model.config.features_per_split,
                "min_leaf": model.config.min_leaf,
                "min_variance_split": model.config.min_variance_split,
                "max_depth": model.config.max_depth,
                "seed": model.config.seed,
                "criterion": model.config.criterion,
            },
            "label_vocab": list(model.label_vocab),
            "feature_names": list(model.feature_names),
            "trees": [_tree_to_jsonable(t) for t in model.trees],
        }
    elif isinstance(model, LogisticModel):
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "kind": "logistic",
            "config": {
                "l2_penalty": model.config.l2_penalty,
                "max_epochs": model.config.max_epochs,
                "grad_tol": model.config.grad_tol,
                "seed": model.config.seed,
            },
            "label_vocab": list(model.label_vocab),
            "feature_names": list(model.feature_names),
            "weights": [[float(v) for v in row] for row in model.weights],
            "feature_mean": [float(v) for v in model.feature_mean],
            "feature_scale": [float(v) for v in model.feature_scale],
        }
    else:
        raise ValueError(f"cannot serialize model of type {type(model).__name__}")
    Path(path).write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def load_model(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported model schema version {version}")
    kind = doc["kind"]
    if kind in ("forest", "tree"):
        return ForestModel(
            kind=kind,
            trees=tuple(_tree_from_jsonable(t) for t in doc["trees"]),
            config=ForestConfig(**doc["config"]),
            label_vocab=tuple(doc["label_vocab"]),
            feature_names=tuple(doc["feature_names"]),
        )
    if kind == "logistic":
        return LogisticModel(
            kind=kind,
            weights=np.asarray(doc["weights"]),
            feature_mean=np.asarray(doc["feature_mean"]),
            feature_scale=np.asarray(doc["feature_scale"]),
            config=LogisticConfig(**doc["config"]),
            label_vocab=tuple(doc["label_vocab"]),
            feature_names=tuple(doc["feature_names"]),
        )
    raise ValueError(f"{path}: unknown model kind {kind!r}")
