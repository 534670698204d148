"""Random forest classifier: bagged CART trees with Gini splits.

The forest is the nondifferentiable black-box model the optimizers work
against.  Its probability output is the proportion of trees voting for the
positive (undesirable) class, so it takes values on the exact grid
``{0, 1/n_trees, ..., 1}`` and its worst case is 1.

Trees are stored as flat node arrays (split feature, threshold, child
indices, leaf vote) so a single instance can be pushed through every tree at
once with a handful of vectorized steps per depth level.  Leaves are encoded
as self-loops with split feature -1, which keeps that traversal branch-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from invclass.core import DimensionError, InvClassError

FOREST_FORMAT = "invclass-forest"
FOREST_VERSION = 1


class DegenerateTrainingError(InvClassError):
    """Training data cannot produce a meaningful classifier."""


@runtime_checkable
class ClassifierContract(Protocol):
    """Anything the optimizers can minimize: a probability in [0, 1] plus a
    finite worst-case value that dominates every attainable output."""

    omega: float

    def predict_probability(self, x: np.ndarray) -> float: ...


@dataclass
class LabeledDataset:
    """Feature matrix with labels in {-1, +1} and per-feature training
    statistics used by the perturbation sampler and the kernel regressor."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    feature_std: np.ndarray = field(default=None)  # type: ignore[assignment]
    feature_mean: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DimensionError("X must be (n, p) with one label per row")
        if not np.isfinite(self.X).all():
            raise ValueError("dataset contains non-finite values")
        if not np.isin(self.y, (-1, 1)).all():
            raise ValueError("labels must be -1 or +1")
        if len(self.feature_names) != self.X.shape[1]:
            raise DimensionError("one name per feature column required")
        if self.feature_mean is None:
            self.feature_mean = self.X.mean(axis=0)
        if self.feature_std is None:
            std = self.X.std(axis=0)
            floor = 1e-6 * np.maximum(1.0, np.abs(self.feature_mean))
            self.feature_std = np.maximum(std, floor)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    features_per_split: int | None = None  # default: ceil(sqrt(p))
    seed: int = 0


@dataclass
class Forest:
    """Trained ensemble.  ``feature``/``threshold``/``left``/``right``/``vote``
    are flat arrays over all nodes of all trees; ``roots`` indexes each tree's
    root node.  ``vote`` is -1/+1 at leaves and 0 at internal nodes."""

    n_features: int
    n_trees: int
    max_depth: int
    features_per_split: int
    seed: int
    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray

    omega: float = 1.0

    def predict_probability(self, x: np.ndarray) -> float:
        """Proportion of trees voting +1 on a single instance."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise DimensionError(f"instance has shape {x.shape}, expected ({self.n_features},)")
        node = self.roots.copy()
        for _ in range(self.max_depth):
            f = self.feature[node]
            if (f < 0).all():
                break
            nxt = np.where(x[f] <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(f >= 0, nxt, node)
        return float(np.count_nonzero(self.vote[node] == 1) / self.n_trees)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Vote proportions for every row of X."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionError(f"matrix has shape {X.shape}, expected (n, {self.n_features})")
        n = X.shape[0]
        rows = np.arange(n)
        positive = np.zeros(n)
        for root in self.roots:
            node = np.full(n, root, dtype=np.intp)
            for _ in range(self.max_depth):
                f = self.feature[node]
                if (f < 0).all():
                    break
                nxt = np.where(X[rows, f] <= self.threshold[node], self.left[node], self.right[node])
                node = np.where(f >= 0, nxt, node)
            positive += self.vote[node] == 1
        return positive / self.n_trees

    def tree_vote(self, tree_index: int, x: np.ndarray) -> int:
        """Scalar traversal of a single tree; used to audit vote proportions."""
        node = int(self.roots[tree_index])
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = int(self.left[node])
            else:
                node = int(self.right[node])
        return int(self.vote[node])

    @classmethod
    def from_node_lists(cls, n_features: int, trees: Sequence[Sequence[tuple]], max_depth: int | None = None) -> "Forest":
        """Assemble a forest from explicit per-tree node lists.

        Each node is ``(feature, threshold, left, right, vote)`` with child
        indices local to its tree and node 0 as root; leaves use feature -1.
        Intended for hand-built fixtures and deserialization.
        """
        feats, thrs, lefts, rights, votes, roots = [], [], [], [], [], []
        offset = 0
        depth = 0
        for tree in trees:
            roots.append(offset)
            for f, thr, lo, hi, vote in tree:
                feats.append(f)
                thrs.append(thr)
                here = len(feats) - 1
                lefts.append(here if f < 0 else offset + lo)
                rights.append(here if f < 0 else offset + hi)
                votes.append(vote)
            depth = max(depth, _tree_depth(tree))
            offset = len(feats)
        return cls(
            n_features=n_features,
            n_trees=len(trees),
            max_depth=max_depth if max_depth is not None else depth,
            features_per_split=n_features,
            seed=0,
            roots=np.asarray(roots, dtype=np.intp),
            feature=np.asarray(feats, dtype=np.intp),
            threshold=np.asarray(thrs, dtype=float),
            left=np.asarray(lefts, dtype=np.intp),
            right=np.asarray(rights, dtype=np.intp),
            vote=np.asarray(votes, dtype=np.intp),
        )

    def to_dict(self) -> dict:
        trees = []
        boundaries = list(self.roots) + [self.feature.size]
        for t in range(self.n_trees):
            start, stop = boundaries[t], boundaries[t + 1]
            trees.append(
                {
                    "feature": self.feature[start:stop].tolist(),
                    "threshold": self.threshold[start:stop].tolist(),
                    "left": (self.left[start:stop] - start).tolist(),
                    "right": (self.right[start:stop] - start).tolist(),
                    "vote": self.vote[start:stop].tolist(),
                }
            )
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "p": self.n_features,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Forest":
        if payload.get("format") != FOREST_FORMAT:
            raise InvClassError("not a forest file")
        if payload.get("version") != FOREST_VERSION:
            raise InvClassError(f"unsupported forest version {payload.get('version')}")
        trees = []
        for tree in payload["trees"]:
            nodes = list(zip(tree["feature"], tree["threshold"], tree["left"], tree["right"], tree["vote"]))
            trees.append(nodes)
        forest = cls.from_node_lists(payload["p"], trees, max_depth=payload["max_depth"])
        forest.features_per_split = payload["features_per_split"]
        forest.seed = payload["seed"]
        return forest

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _tree_depth(nodes, node=0, depth=0):
    f = nodes[node][0]
    if f < 0:
        return depth
    return max(
        _tree_depth(nodes, nodes[node][2], depth + 1),
        _tree_depth(nodes, nodes[node][3], depth + 1),
    )


def _best_split(X, y_pos, rows, candidates):
    """Lowest weighted Gini split over the candidate features.

    Returns ``(gini, feature, threshold)`` or None when no candidate feature
    varies on the node's rows.  Thresholds are midpoints between consecutive
    distinct values; ties keep the earliest candidate.
    """
    best = None
    n = rows.size
    for f in candidates:
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = y_pos[rows][order]
        cuts = np.nonzero(vs[:-1] < vs[1:])[0]
        if cuts.size == 0:
            continue
        cum_pos = np.cumsum(ys)
        total_pos = cum_pos[-1]
        n_left = cuts + 1.0
        n_right = n - n_left
        pos_left = cum_pos[cuts]
        pos_right = total_pos - pos_left
        pl = pos_left / n_left
        pr = pos_right / n_right
        gini = (n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)) / n
        j = int(np.argmin(gini))
        if best is None or gini[j] < best[0]:
            thr = 0.5 * (vs[cuts[j]] + vs[cuts[j] + 1])
            best = (float(gini[j]), int(f), thr)
    return best


def _grow_tree(X, y, rng, max_depth, features_per_split):
    y_pos = (y == 1).astype(float)
    p = X.shape[1]
    feats, thrs, lefts, rights, votes = [], [], [], [], []

    def leaf(rows):
        idx = len(feats)
        pos = int(np.count_nonzero(y[rows] == 1))
        feats.append(-1)
        thrs.append(0.0)
        lefts.append(idx)
        rights.append(idx)
        # Tie votes go to the benign class.
        votes.append(1 if pos > rows.size - pos else -1)
        return idx

    def grow(rows, depth):
        labels = y[rows]
        if depth >= max_depth or rows.size < 2 or (labels == labels[0]).all():
            return leaf(rows)
        candidates = rng.choice(p, size=features_per_split, replace=False)
        split = _best_split(X, y_pos, rows, candidates)
        if split is None:
            return leaf(rows)
        _, f, thr = split
        idx = len(feats)
        feats.append(f)
        thrs.append(thr)
        lefts.append(0)
        rights.append(0)
        votes.append(0)
        mask = X[rows, f] <= thr
        lefts[idx] = grow(rows[mask], depth + 1)
        rights[idx] = grow(rows[~mask], depth + 1)
        return idx

    grow(np.arange(X.shape[0]), 0)
    return list(zip(feats, thrs, lefts, rights, votes))


def rf_train(data: LabeledDataset, params: ForestParams) -> Forest:
    """Fit a bagged forest; bit-identical for identical seeds.

    Each tree draws a bootstrap sample of size n and its own feature subsets,
    all from a seed stream spawned per tree, so tree t is independent of how
    many trees are requested.
    """
    if params.n_trees < 1:
        raise DegenerateTrainingError("at least one tree required")
    if data.n < 2:
        raise DegenerateTrainingError("at least two training rows required")
    if len(np.unique(data.y)) < 2:
        raise DegenerateTrainingError("training data contains a single class")
    p = data.p
    fps = params.features_per_split
    if fps is None:
        fps = int(np.ceil(np.sqrt(p)))
    fps = max(1, min(fps, p))

    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(seeds[t])
        rows = rng.integers(0, data.n, size=data.n)
        trees.append(_grow_tree(data.X[rows], data.y[rows], rng, params.max_depth, fps))
    forest = Forest.from_node_lists(p, trees, max_depth=params.max_depth)
    forest.features_per_split = fps
    forest.seed = params.seed
    return forest


def rf_predict(forest: Forest, x: np.ndarray) -> float:
    return forest.predict_probability(x)
