"""Bagged decision-tree ensemble (Gini impurity, majority vote) with a
deterministic seed contract and portable JSON persistence.

Kept dependency-free on purpose: the classifier ships with the toolkit
and its predictions must be reproducible bit-for-bit from (data, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError

FORMAT_VERSION = 1

DEFAULT_GRID = {
    "n_trees": (50, 100, 200),
    "max_depth": (4, 8, 16, None),
    "min_leaf": (1, 5, 20),
}


def _grid_configs(grid):
    for n_trees in grid["n_trees"]:
        for max_depth in grid["max_depth"]:
            for min_leaf in grid["min_leaf"]:
                yield {"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf}


class _Tree:
    """One CART tree stored as parallel arrays (feature, threshold,
    children, leaf probability)."""

    __slots__ = ("feature", "threshold", "left", "right", "prob")

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.prob = []

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.prob.append(0.0)
        return len(self.feature) - 1

    def fit(self, X, y, max_depth, min_leaf, max_features, rng):
        root = self._new_node()
        stack = [(root, np.arange(X.shape[0]), 0)]
        n_features = X.shape[1]
        while stack:
            node, idx, depth = stack.pop()
            ys = y[idx]
            pos = int(ys.sum())
            self.prob[node] = pos / len(ys)
            if (
                pos == 0
                or pos == len(ys)
                or len(ys) < 2 * min_leaf
                or (max_depth is not None and depth >= max_depth)
            ):
                continue
            feats = rng.choice(n_features, size=max_features, replace=False)
            best = _best_split(X, ys, idx, feats, min_leaf)
            if best is None:
                continue
            fidx, thr, mask = best
            self.feature[node] = int(fidx)
            self.threshold[node] = float(thr)
            left = self._new_node()
            right = self._new_node()
            self.left[node] = left
            self.right[node] = right
            stack.append((right, idx[~mask], depth + 1))
            stack.append((left, idx[mask], depth + 1))

    def predict_prob(self, X):
        out = np.empty(X.shape[0])
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        prob = np.asarray(self.prob)
        for i in range(X.shape[0]):
            node = 0
            while feature[node] >= 0:
                node = left[node] if X[i, feature[node]] <= threshold[node] else right[node]
            out[i] = prob[node]
        return out

    def to_json(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "prob": self.prob,
        }

    @classmethod
    def from_json(cls, obj):
        t = cls()
        t.feature = list(obj["feature"])
        t.threshold = list(obj["threshold"])
        t.left = list(obj["left"])
        t.right = list(obj["right"])
        t.prob = list(obj["prob"])
        return t


def _best_split(X, ys, idx, feats, min_leaf):
    """Vectorized exhaustive split search over the candidate features.
    Returns (feature, threshold, left_mask) or None."""
    n = len(idx)
    best_gini = math.inf
    best = None
    total_pos = ys.sum()
    for f in feats:
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        sorted_col = col[order]
        sorted_y = ys[order]
        pos_left = np.cumsum(sorted_y)[:-1]
        n_left = np.arange(1, n)
        # splits only between distinct adjacent values, honoring min_leaf
        valid = sorted_col[:-1] < sorted_col[1:]
        valid &= (n_left >= min_leaf) & ((n - n_left) >= min_leaf)
        if not valid.any():
            continue
        n_right = n - n_left
        pos_right = total_pos - pos_left
        gini_left = 1.0 - (pos_left / n_left) ** 2 - (1 - pos_left / n_left) ** 2
        gini_right = 1.0 - (pos_right / n_right) ** 2 - (1 - pos_right / n_right) ** 2
        weighted = (n_left * gini_left + n_right * gini_right) / n
        weighted[~valid] = math.inf
        k = int(np.argmin(weighted))
        if weighted[k] < best_gini - 1e-12:
            thr = (sorted_col[k] + sorted_col[k + 1]) / 2.0
            best_gini = weighted[k]
            best = (f, thr, col <= thr)
    return best


@dataclass
class RandomForest:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    seed: int = 0
    trees: list = field(default_factory=list)
    oob_score: float | None = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(np.unique(y)) < 2:
            raise TrainingError("training labels contain a single class")
        n = X.shape[0]
        max_features = max(1, int(math.sqrt(X.shape[1])))
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees = []
        oob_votes = np.zeros(n)
        oob_counts = np.zeros(n)
        for ss in seeds:
            rng = np.random.default_rng(ss)
            sample = rng.integers(0, n, size=n)
            tree = _Tree()
            tree.fit(X[sample], y[sample], self.max_depth, self.min_leaf,
                     max_features, rng)
            self.trees.append(tree)
            oob = np.ones(n, dtype=bool)
            oob[sample] = False
            if oob.any():
                oob_votes[oob] += tree.predict_prob(X[oob])
                oob_counts[oob] += 1
        covered = oob_counts > 0
        if covered.any():
            pred = (oob_votes[covered] / oob_counts[covered]) >= 0.5
            self.oob_score = float(np.mean(pred == (y[covered] == 1)))
        return self

    def predict_prob(self, X):
        X = np.asarray(X, dtype=np.float64)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict_prob(X)
        return total / len(self.trees)

    def predict(self, X):
        return (self.predict_prob(X) >= 0.5).astype(np.int64)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "seed": self.seed,
            "oob_score": self.oob_score,
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, obj) -> "RandomForest":
        if obj.get("format_version") != FORMAT_VERSION:
            raise TrainingError(f"unsupported model version: {obj.get('format_version')}")
        forest = cls(
            n_trees=obj["n_trees"],
            max_depth=obj["max_depth"],
            min_leaf=obj["min_leaf"],
            seed=obj["seed"],
        )
        forest.oob_score = obj.get("oob_score")
        forest.trees = [_Tree.from_json(t) for t in obj["trees"]]
        return forest

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RandomForest":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class TrainResult:
    model: RandomForest
    test_accuracy: float
    best_params: dict
    grid_scores: list  # (params, oob score)


def train_classifier(X, y, split_ratio=0.8, seed=0, grid=None) -> TrainResult:
    """Shuffle, split train/test, grid-search forest hyperparameters by
    out-of-bag accuracy on the training split, and report held-out
    accuracy. Deterministic under a fixed seed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    grid = grid or DEFAULT_GRID
    rng = np.random.default_rng(seed)
    order = rng.permutation(X.shape[0])
    cut = int(round(split_ratio * X.shape[0]))
    train_idx, test_idx = order[:cut], order[cut:]
    if len(np.unique(y[train_idx])) < 2:
        raise TrainingError("training split contains a single class")

    best_model = None
    best_score = -1.0
    best_params = None
    scores = []
    for params in _grid_configs(grid):
        forest = RandomForest(seed=seed, **params).fit(X[train_idx], y[train_idx])
        score = forest.oob_score if forest.oob_score is not None else 0.0
        scores.append((params, score))
        if score > best_score + 1e-12:
            best_score = score
            best_model = forest
            best_params = params
    test_accuracy = best_model.score(X[test_idx], y[test_idx])
    return TrainResult(best_model, test_accuracy, best_params, scores)
