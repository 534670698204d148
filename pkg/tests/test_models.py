import json

import numpy as np
import pytest

from invclass.core import DimensionError
from invclass.models import (
    DegenerateTrainingError,
    Forest,
    ForestParams,
    LabeledDataset,
    rf_predict,
    rf_train,
)


def toy_dataset(seed=0, n=60, p=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = np.where(X[:, 0] + 0.5 * X[:, 2] > 0, 1, -1)
    return LabeledDataset(X, y, [f"f{i}" for i in range(p)])


def separable_dataset():
    # 10 points, separable on feature 0 with a wide margin so a bootstrap
    # sample's midpoint threshold still separates the full set.
    X = np.zeros((10, 3))
    X[:, 0] = [0.0, 0.05, 0.1, 0.2, 0.3, 0.7, 0.8, 0.9, 0.95, 1.0]
    X[:, 1] = [0.3, 0.1, 0.9, 0.2, 0.8, 0.4, 0.6, 0.5, 0.0, 0.7]
    X[:, 2] = 1.0
    y = np.where(X[:, 0] > 0.5, 1, -1)
    return LabeledDataset(X, y, ["a", "b", "c"])


def exhaustive_best_split(X, y):
    """Independent oracle: try every (feature, midpoint) split, return the
    minimum weighted Gini impurity achievable."""
    n = X.shape[0]
    best = np.inf
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (a + b)
            left = y[X[:, f] <= thr]
            right = y[X[:, f] > thr]

            def gini(part):
                if part.size == 0:
                    return 0.0
                q = np.mean(part == 1)
                return 2 * q * (1 - q)

            score = (left.size * gini(left) + right.size * gini(right)) / n
            best = min(best, score)
    return best


class TestTraining:
    def test_single_tree_finds_separating_split(self):
        data = separable_dataset()
        forest = rf_train(data, ForestParams(n_trees=1, max_depth=4, features_per_split=3, seed=5))
        # The root must split on feature 0 (the only perfect separator), and
        # its impurity must match the exhaustive split search.
        root = forest.roots[0]
        assert forest.feature[root] == 0
        assert exhaustive_best_split(data.X, data.y) == 0.0
        preds = forest.predict_matrix(data.X)
        labels = np.where(preds >= 0.5, 1, -1)
        assert (labels == data.y).all()

    def test_seed_determinism(self):
        data = toy_dataset()
        params = ForestParams(n_trees=12, max_depth=5, seed=99)
        f1 = rf_train(data, params)
        f2 = rf_train(data, params)
        assert json.dumps(f1.to_dict(), sort_keys=True) == json.dumps(f2.to_dict(), sort_keys=True)

    def test_zero_trees_rejected(self):
        with pytest.raises(DegenerateTrainingError):
            rf_train(toy_dataset(), ForestParams(n_trees=0))

    def test_single_class_rejected(self):
        data = toy_dataset()
        flat = LabeledDataset(data.X, np.ones(data.n, dtype=int), data.feature_names)
        with pytest.raises(DegenerateTrainingError):
            rf_train(flat, ForestParams(n_trees=3))

    def test_training_accuracy_on_separable_data(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, size=(200, 4))
        y = np.where(X[:, 1] > 0.1, 1, -1)
        data = LabeledDataset(X, y, list("abcd"))
        forest = rf_train(data, ForestParams(n_trees=50, max_depth=4, seed=3))
        preds = forest.predict_matrix(X)
        acc = np.mean(np.where(preds >= 0.5, 1, -1) == y)
        assert acc >= 0.95


class TestPrediction:
    def hand_forest(self, votes):
        # n trees, each a single leaf with a fixed vote.
        trees = [[(-1, 0.0, 0, 0, v)] for v in votes]
        return Forest.from_node_lists(2, trees)

    def test_vote_proportion(self):
        forest = self.hand_forest([1] * 7 + [-1] * 3)
        assert rf_predict(forest, np.zeros(2)) == pytest.approx(0.7)

    def test_unanimous(self):
        assert rf_predict(self.hand_forest([-1] * 4), np.zeros(2)) == 0.0
        forest = self.hand_forest([1] * 4)
        assert rf_predict(forest, np.zeros(2)) == 1.0
        assert forest.omega >= 1.0

    def test_output_on_exact_grid(self):
        data = toy_dataset(seed=2)
        forest = rf_train(data, ForestParams(n_trees=8, max_depth=4, seed=0))
        for x in data.X[:20]:
            votes = round(forest.predict_probability(x) * 8)
            assert forest.predict_probability(x) == votes / 8

    def test_matches_scalar_traversal(self):
        data = toy_dataset(seed=3)
        forest = rf_train(data, ForestParams(n_trees=10, max_depth=5, seed=17))
        for x in data.X[:10]:
            votes = [forest.tree_vote(t, x) for t in range(forest.n_trees)]
            assert forest.predict_probability(x) == votes.count(1) / forest.n_trees

    def test_dimension_check(self):
        forest = self.hand_forest([1, -1])
        with pytest.raises(DimensionError):
            forest.predict_probability(np.zeros(5))

    def test_seeded_predictions_identical(self):
        data = toy_dataset(seed=4)
        params = ForestParams(n_trees=20, max_depth=6, seed=11)
        probe = np.random.default_rng(0).normal(size=(30, data.p))
        p1 = rf_train(data, params).predict_matrix(probe)
        p2 = rf_train(data, params).predict_matrix(probe)
        np.testing.assert_array_equal(p1, p2)


class TestSerialization:
    def test_round_trip_bytes(self, tmp_path):
        data = toy_dataset(seed=5)
        forest = rf_train(data, ForestParams(n_trees=9, max_depth=5, seed=42))
        path1 = tmp_path / "a.json"
        path2 = tmp_path / "b.json"
        forest.save(path1)
        Forest.load(path1).save(path2)
        assert path1.read_bytes() == path2.read_bytes()

    def test_round_trip_predictions(self, tmp_path):
        data = toy_dataset(seed=6)
        forest = rf_train(data, ForestParams(n_trees=7, max_depth=4, seed=1))
        path = tmp_path / "f.json"
        forest.save(path)
        loaded = Forest.load(path)
        probe = np.random.default_rng(2).normal(size=(25, data.p))
        np.testing.assert_array_equal(forest.predict_matrix(probe), loaded.predict_matrix(probe))

    def test_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(Exception):
            Forest.load(path)


class TestLabeledDataset:
    def test_std_floor_for_constant_feature(self):
        X = np.ones((10, 2))
        X[:, 1] = np.arange(10)
        y = np.array([-1, 1] * 5)
        data = LabeledDataset(X, y, ["const", "ramp"])
        assert data.feature_std[0] > 0
        assert data.feature_std[1] == pytest.approx(np.std(np.arange(10)))

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((3, 1)), np.array([0, 1, 2]), ["x"])
