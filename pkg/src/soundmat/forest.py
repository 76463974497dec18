"""Deterministic random forest over fixed-length feature vectors.

Training is reproducible from (sample order, config, seed) alone: each
tree gets its own SplitMix64 stream whose seed is drawn up front from a
master stream, bootstrap indices are drawn first, and per-node feature
subsets are drawn in preorder (node, left subtree, right subtree).
Splits maximize Gini impurity decrease over the midpoints of sorted
unique feature values; every tie — equal decrease, equal vote count,
equal probability — resolves toward the lowest feature index, lowest
threshold, or lowest label id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .actions import N_ACTIONS, Action
from .errors import DimensionMismatch, InsufficientClasses, MalformedJson
from .rng import SplitMix64

MODEL_FORMAT = "soundmat-forest"
MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class LabeledSample:
    features: np.ndarray
    label: Action


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class Leaf:
    counts: tuple[int, ...]  # per-class bootstrap sample counts, len N_ACTIONS

    @property
    def majority(self) -> Action:
        # first argmax -> lowest label id on ties
        best = 0
        for c in range(1, len(self.counts)):
            if self.counts[c] > self.counts[best]:
                best = c
        return Action(best)


Node = Union[Split, Leaf]


@dataclass(frozen=True)
class DecisionTree:
    nodes: tuple[Node, ...]  # nodes[0] is the root; children reference later slots

    def leaf_for(self, features: np.ndarray) -> Leaf:
        node = self.nodes[0]
        while isinstance(node, Split):
            if features[node.feature] <= node.threshold:
                node = self.nodes[node.left]
            else:
                node = self.nodes[node.right]
        return node


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> ceil(sqrt(feature_dim))
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees <= 0 or self.max_depth <= 0 or self.min_samples_leaf <= 0:
            raise ValueError("forest config values must be positive")
        if self.features_per_split is not None and self.features_per_split <= 0:
            raise ValueError("features_per_split must be positive")

    def resolve_features_per_split(self, feature_dim: int) -> int:
        if self.features_per_split is not None:
            return min(self.features_per_split, feature_dim)
        return min(math.ceil(math.sqrt(feature_dim)), feature_dim)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    classes_present: tuple[Action, ...]
    train_seed: int
    feature_dim: int


def _gini_from_counts(counts: np.ndarray, total: int) -> float:
    return 1.0 - float(((counts / total) ** 2).sum())


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    candidate_features: Sequence[int],
    parent_gini: float,
    min_leaf: int,
) -> tuple[int, float] | None:
    """Exhaustive (feature, midpoint-threshold) search, max Gini decrease.

    Candidates are scanned in ascending feature order and, within one
    feature, ascending threshold order; only a strictly larger decrease
    replaces the incumbent, which realizes the documented tie-breaks.
    """
    n = len(idx)
    labels = y[idx]
    best_decrease = 0.0
    best: tuple[int, float] | None = None
    for f in candidate_features:
        values = X[idx, f]
        order = np.argsort(values, kind="stable")
        vs = values[order]
        if vs[0] == vs[-1]:
            continue
        onehot = labels[order][:, None] == np.arange(N_ACTIONS)[None, :]
        cum = np.cumsum(onehot, axis=0)
        boundaries = np.nonzero(vs[:-1] < vs[1:])[0]
        n_left = boundaries + 1
        valid = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        boundaries = boundaries[valid]
        n_left = n_left[valid]
        n_right = n - n_left
        counts_left = cum[boundaries]
        counts_right = cum[-1] - counts_left
        gini_left = 1.0 - ((counts_left / n_left[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((counts_right / n_right[:, None]) ** 2).sum(axis=1)
        weighted = (n_left * gini_left + n_right * gini_right) / n
        decrease = parent_gini - weighted
        j = int(np.argmax(decrease))  # first max -> lowest threshold
        if decrease[j] > best_decrease:
            b = boundaries[j]
            best_decrease = float(decrease[j])
            best = (f, float((vs[b] + vs[b + 1]) / 2.0))
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, k: int, rng: SplitMix64) -> DecisionTree:
    n = len(X)
    if cfg.bootstrap:
        idx = np.array([rng.next_below(n) for _ in range(n)], dtype=np.intp)
    else:
        idx = np.arange(n, dtype=np.intp)
    nodes: list[Node] = []

    def build(node_idx: np.ndarray, depth: int) -> int:
        counts = np.bincount(y[node_idx], minlength=N_ACTIONS)
        slot = len(nodes)
        total = len(node_idx)
        gini = _gini_from_counts(counts, total)
        if depth >= cfg.max_depth or total < 2 * cfg.min_samples_leaf or gini == 0.0:
            nodes.append(Leaf(counts=tuple(int(c) for c in counts)))
            return slot
        features = rng.sample_indices(X.shape[1], k)
        found = _best_split(X, y, node_idx, features, gini, cfg.min_samples_leaf)
        if found is None:
            nodes.append(Leaf(counts=tuple(int(c) for c in counts)))
            return slot
        feature, threshold = found
        nodes.append(Leaf(counts=()))  # placeholder, replaced below
        mask = X[node_idx, feature] <= threshold
        left = build(node_idx[mask], depth + 1)
        right = build(node_idx[~mask], depth + 1)
        nodes[slot] = Split(feature=feature, threshold=threshold, left=left, right=right)
        return slot

    build(idx, 0)
    return DecisionTree(nodes=tuple(nodes))


def train_forest(samples: Sequence[LabeledSample], cfg: ForestConfig, seed: int) -> ForestModel:
    if not samples:
        raise InsufficientClasses("no training samples")
    dims = {len(s.features) for s in samples}
    if len(dims) != 1:
        raise DimensionMismatch(f"inconsistent feature dimensions: {sorted(dims)}")
    feature_dim = dims.pop()
    labels_present = sorted({s.label for s in samples})
    if len(labels_present) < 2:
        raise InsufficientClasses(
            f"need at least 2 distinct labels, got {len(labels_present)}"
        )
    X = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
    y = np.array([int(s.label) for s in samples], dtype=np.intp)
    k = cfg.resolve_features_per_split(feature_dim)

    master = SplitMix64(seed)
    tree_seeds = [master.next_u64() for _ in range(cfg.n_trees)]
    trees = tuple(_grow_tree(X, y, cfg, k, SplitMix64(ts)) for ts in tree_seeds)
    return ForestModel(
        trees=trees,
        classes_present=tuple(labels_present),
        train_seed=seed,
        feature_dim=feature_dim,
    )


def predict_proba(model: ForestModel, features: np.ndarray) -> dict[Action, float]:
    """Per-tree majority votes turned into probabilities over the
    classes seen in training; values sum to 1 within 1e-9."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1 or len(features) != model.feature_dim:
        raise DimensionMismatch(
            f"expected feature vector of length {model.feature_dim}, got {features.shape}"
        )
    votes = [0] * N_ACTIONS
    for tree in model.trees:
        votes[int(tree.leaf_for(features).majority)] += 1
    n = len(model.trees)
    return {label: votes[int(label)] / n for label in model.classes_present}


def predict_top(model: ForestModel, features: np.ndarray) -> Action:
    probs = predict_proba(model, features)
    return top_action(probs)


def top_action(probs: dict[Action, float]) -> Action:
    """Argmax with ties resolved toward the lowest label id."""
    return min(probs.items(), key=lambda kv: (-kv[1], int(kv[0])))[0]


def model_to_json(model: ForestModel) -> dict:
    trees = []
    for tree in model.trees:
        nodes = []
        for node in tree.nodes:
            if isinstance(node, Split):
                nodes.append({"split": [node.feature, node.threshold, node.left, node.right]})
            else:
                nodes.append({"leaf": list(node.counts)})
        trees.append(nodes)
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_dim": model.feature_dim,
        "train_seed": model.train_seed,
        "classes_present": [int(a) for a in model.classes_present],
        "trees": trees,
    }


def model_from_json(doc: dict) -> ForestModel:
    try:
        if doc["format"] != MODEL_FORMAT or doc["version"] != MODEL_VERSION:
            raise MalformedJson(f"unsupported model document: {doc.get('format')!r}")
        trees = []
        for raw_tree in doc["trees"]:
            nodes: list[Node] = []
            for raw in raw_tree:
                if "split" in raw:
                    f, thr, left, right = raw["split"]
                    nodes.append(Split(feature=int(f), threshold=float(thr), left=int(left), right=int(right)))
                else:
                    nodes.append(Leaf(counts=tuple(int(c) for c in raw["leaf"])))
            trees.append(DecisionTree(nodes=tuple(nodes)))
        return ForestModel(
            trees=tuple(trees),
            classes_present=tuple(Action(c) for c in doc["classes_present"]),
            train_seed=int(doc["train_seed"]),
            feature_dim=int(doc["feature_dim"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"bad model document: {exc}") from exc


def model_to_json_bytes(model: ForestModel) -> bytes:
    return json.dumps(model_to_json(model), sort_keys=True, separators=(",", ":")).encode("utf-8")


def model_from_json_bytes(data: bytes) -> ForestModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(f"bad model bytes: {exc}") from exc
    return model_from_json(doc)
