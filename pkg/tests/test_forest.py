"""Forest trainer tests, anchored by an exhaustive best-split oracle."""

import json
import time

import numpy as np
import pytest

from soundmat.actions import Action
from soundmat.errors import DimensionMismatch, InsufficientClasses
from soundmat.forest import (
    DecisionTree,
    ForestConfig,
    ForestModel,
    LabeledSample,
    Leaf,
    Split,
    model_from_json_bytes,
    model_to_json_bytes,
    predict_proba,
    predict_top,
    train_forest,
)

N_CLASSES = 6


def brute_force_best_split(X, y):
    """Plain-loop scan of every (feature, midpoint) candidate.

    Mirrors the trainer's tie-breaks: strictly-better decrease wins,
    features scanned ascending, thresholds ascending.
    """
    n = len(y)
    parent_counts = [0] * N_CLASSES
    for label in y:
        parent_counts[label] += 1
    parent_gini = 1.0 - sum((c / n) ** 2 for c in parent_counts)
    best = None
    best_decrease = 0.0
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f]))
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            left = [y[i] for i in range(n) if X[i, f] <= threshold]
            right = [y[i] for i in range(n) if X[i, f] > threshold]
            nl, nr = len(left), len(right)
            counts_l = [0] * N_CLASSES
            counts_r = [0] * N_CLASSES
            for label in left:
                counts_l[label] += 1
            for label in right:
                counts_r[label] += 1
            gini_l = 1.0 - sum((c / nl) ** 2 for c in counts_l)
            gini_r = 1.0 - sum((c / nr) ** 2 for c in counts_r)
            weighted = (nl * gini_l + nr * gini_r) / n
            decrease = parent_gini - weighted
            if decrease > best_decrease:
                best_decrease = decrease
                best = (f, threshold)
    return best


def make_samples(X, y):
    return [LabeledSample(features=np.asarray(row, dtype=float), label=Action(label))
            for row, label in zip(X, y)]


def depth1_config(n_features):
    return ForestConfig(n_trees=1, max_depth=1, bootstrap=False,
                        features_per_split=n_features)


class TestGiniOracle:
    def test_matches_brute_force_on_random_datasets(self):
        rng = np.random.default_rng(4242)
        checked = 0
        while checked < 60:
            n = int(rng.integers(4, 13))
            X = rng.uniform(-1, 1, size=(n, 2))
            y = rng.integers(0, 2, size=n).tolist()
            if len(set(y)) < 2:
                continue
            expected = brute_force_best_split(X, y)
            model = train_forest(make_samples(X, y), depth1_config(2), seed=int(rng.integers(1 << 30)))
            root = model.trees[0].nodes[0]
            if expected is None:
                assert isinstance(root, Leaf)
            else:
                assert isinstance(root, Split)
                assert (root.feature, root.threshold) == expected
            checked += 1

    def test_separable_on_feature_zero(self):
        # class 0 clusters at 0.0 on feature 0, class 1 at 1.0; feature 1 is noise
        rng = np.random.default_rng(7)
        X = np.array([[0.0, rng.uniform()] for _ in range(4)]
                     + [[1.0, rng.uniform()] for _ in range(4)])
        y = [0] * 4 + [1] * 4
        cfg = ForestConfig(n_trees=25, max_depth=4, features_per_split=2, bootstrap=True)
        model = train_forest(make_samples(X, y), cfg, seed=42)
        for tree in model.trees:
            root = tree.nodes[0]
            if isinstance(root, Split):  # bootstrap may drop one class entirely
                assert root.feature == 0
        assert predict_top(model, np.array([0.0, 0.5])) == Action.SHAKE
        assert predict_top(model, np.array([1.0, 0.5])) == Action.GO_FORWARD


class TestTrainGuards:
    def test_single_class_rejected(self):
        samples = make_samples(np.zeros((10, 3)), [2] * 10)
        with pytest.raises(InsufficientClasses):
            train_forest(samples, ForestConfig(), seed=1)

    def test_empty_rejected(self):
        with pytest.raises(InsufficientClasses):
            train_forest([], ForestConfig(), seed=1)

    def test_mixed_dimensions_rejected(self):
        samples = [
            LabeledSample(features=np.zeros(3), label=Action.SHAKE),
            LabeledSample(features=np.zeros(4), label=Action.GO_FORWARD),
        ]
        with pytest.raises(DimensionMismatch):
            train_forest(samples, ForestConfig(), seed=1)


class TestDeterminism:
    def test_same_seed_same_predictions(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(20, 5))
        y = (rng.integers(0, 3, size=20)).tolist()
        y[0], y[1], y[2] = 0, 1, 2
        samples = make_samples(X, y)
        cfg = ForestConfig(n_trees=20, max_depth=5)
        a = train_forest(samples, cfg, seed=99)
        b = train_forest(samples, cfg, seed=99)
        queries = rng.normal(size=(100, 5))
        for q in queries:
            assert predict_proba(a, q) == predict_proba(b, q)

    def test_same_seed_identical_serialization(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(16, 4))
        y = [0, 1] * 8
        samples = make_samples(X, y)
        a = train_forest(samples, ForestConfig(n_trees=10), seed=5)
        b = train_forest(samples, ForestConfig(n_trees=10), seed=5)
        assert model_to_json_bytes(a) == model_to_json_bytes(b)

    def test_different_seeds_differ(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(16, 4))
        y = (rng.integers(0, 2, size=16)).tolist()
        y[0], y[1] = 0, 1
        samples = make_samples(X, y)
        a = train_forest(samples, ForestConfig(n_trees=10), seed=1)
        b = train_forest(samples, ForestConfig(n_trees=10), seed=2)
        assert model_to_json_bytes(a) != model_to_json_bytes(b)


def debug_forest(votes_per_tree, feature_dim=1):
    """Hand-built forest whose trees vote fixed classes for any input."""
    trees = []
    for label in votes_per_tree:
        counts = [0] * N_CLASSES
        counts[label] = 1
        trees.append(DecisionTree(nodes=(Leaf(counts=tuple(counts)),)))
    classes = tuple(sorted({Action(v) for v in votes_per_tree}))
    return ForestModel(trees=tuple(trees), classes_present=classes,
                       train_seed=0, feature_dim=feature_dim)


class TestPredict:
    def test_vote_counting_two_two(self):
        model = debug_forest([0, 0, 1, 1])
        probs = predict_proba(model, np.zeros(1))
        assert probs == {Action.SHAKE: 0.5, Action.GO_FORWARD: 0.5}

    def test_absent_classes_not_supported(self):
        model = debug_forest([0, 1, 1, 1])
        probs = predict_proba(model, np.zeros(1))
        assert set(probs) == {Action.SHAKE, Action.GO_FORWARD}
        for label in (Action.LIGHT_UP, Action.TURN_LEFT, Action.GO_BACKWARD, Action.TURN_RIGHT):
            assert probs.get(label, 0.0) == 0.0

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(18, 4))
        y = (rng.integers(0, 4, size=18)).tolist()
        y[:4] = [0, 1, 2, 3]
        model = train_forest(make_samples(X, y), ForestConfig(n_trees=30), seed=3)
        for _ in range(50):
            total = sum(predict_proba(model, rng.normal(size=4)).values())
            assert abs(total - 1.0) <= 1e-9

    def test_top_tie_breaks_to_lowest_id(self):
        model = debug_forest([0, 0, 1, 1])
        assert predict_top(model, np.zeros(1)) == Action.SHAKE

    def test_top_is_argmax(self):
        model = debug_forest([3, 3, 3, 1, 3, 3, 1, 3, 1, 3])
        probs = predict_proba(model, np.zeros(1))
        assert probs[Action.TURN_LEFT] == 0.7
        assert predict_top(model, np.zeros(1)) == Action.TURN_LEFT

    def test_top_matches_recomputed_argmax_on_random_models(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            n = int(rng.integers(6, 16))
            X = rng.normal(size=(n, 3))
            y = rng.integers(0, 4, size=n).tolist()
            if len(set(y)) < 2:
                continue
            model = train_forest(make_samples(X, y), ForestConfig(n_trees=9, max_depth=3), seed=int(rng.integers(1 << 30)))
            q = rng.normal(size=3)
            probs = predict_proba(model, q)
            best = min(probs.items(), key=lambda kv: (-kv[1], int(kv[0])))[0]
            assert predict_top(model, q) == best

    def test_dimension_mismatch(self):
        model = debug_forest([0, 1], feature_dim=4)
        with pytest.raises(DimensionMismatch):
            predict_proba(model, np.zeros(3))

    def test_trained_point_has_high_probability(self):
        rng = np.random.default_rng(41)
        X = np.concatenate([rng.normal(0, 0.05, size=(6, 4)),
                            rng.normal(5, 0.05, size=(6, 4))])
        y = [0] * 6 + [1] * 6
        model = train_forest(make_samples(X, y), ForestConfig(), seed=42)
        probs = predict_proba(model, X[0])
        assert probs[Action.SHAKE] >= 0.9


class TestSerialization:
    def test_round_trip_lossless(self):
        rng = np.random.default_rng(50)
        X = rng.normal(size=(14, 5))
        y = (rng.integers(0, 3, size=14)).tolist()
        y[:3] = [0, 1, 2]
        model = train_forest(make_samples(X, y), ForestConfig(n_trees=12), seed=8)
        data = model_to_json_bytes(model)
        restored = model_from_json_bytes(data)
        assert model_to_json_bytes(restored) == data
        for _ in range(25):
            q = rng.normal(size=5)
            assert predict_proba(model, q) == predict_proba(restored, q)

    def test_document_is_versioned(self):
        model = debug_forest([0, 1])
        doc = json.loads(model_to_json_bytes(model))
        assert doc["format"] == "soundmat-forest"
        assert doc["version"] == 1


class TestTrainingLatency:
    def test_sixty_samples_under_five_seconds(self):
        rng = np.random.default_rng(60)
        X = rng.normal(size=(60, 96)) + np.repeat(np.arange(6), 10)[:, None] * 0.5
        y = np.repeat(np.arange(6), 10).tolist()
        samples = make_samples(X, y)
        start = time.perf_counter()
        train_forest(samples, ForestConfig(), seed=42)
        assert time.perf_counter() - start < 5.0
