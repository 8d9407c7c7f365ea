import numpy as np
import pytest

from eosforensics import forest
from eosforensics.errors import TrainingError

SMALL_GRID = {"n_trees": (25,), "max_depth": (8,), "min_leaf": (1,)}


def _blobs(n_per_class=300, seed=0, gap=4.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n_per_class, 5))
    b = rng.normal(gap, 1.0, size=(n_per_class, 5))
    X = np.vstack([a, b])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return X, y


def test_separable_data_high_accuracy():
    X, y = _blobs()
    result = forest.train_classifier(X, y, seed=7, grid=SMALL_GRID)
    assert result.test_accuracy >= 0.98
    assert result.model.oob_score is not None and result.model.oob_score > 0.95


def test_deterministic_fit():
    X, y = _blobs(n_per_class=100)
    m1 = forest.RandomForest(n_trees=10, max_depth=6, seed=42).fit(X, y)
    m2 = forest.RandomForest(n_trees=10, max_depth=6, seed=42).fit(X, y)
    assert m1.to_json() == m2.to_json()
    m3 = forest.RandomForest(n_trees=10, max_depth=6, seed=43).fit(X, y)
    assert m3.to_json() != m1.to_json()


def test_persistence_round_trip(tmp_path):
    X, y = _blobs(n_per_class=80)
    model = forest.RandomForest(n_trees=8, max_depth=4, seed=1).fit(X, y)
    path = tmp_path / "model.json"
    model.save(path)
    again = forest.RandomForest.load(path)
    assert np.array_equal(model.predict(X), again.predict(X))
    assert again.to_json() == model.to_json()


def test_unsupported_version_rejected(tmp_path):
    with pytest.raises(TrainingError):
        forest.RandomForest.from_json({"format_version": 999})


def test_single_class_rejected():
    X = np.zeros((10, 3))
    y = np.zeros(10)
    with pytest.raises(TrainingError):
        forest.RandomForest(n_trees=2).fit(X, y)


def test_min_leaf_respected():
    X, y = _blobs(n_per_class=60)
    model = forest.RandomForest(n_trees=5, min_leaf=20, seed=0).fit(X, y)
    # leaves must never have fewer than min_leaf training rows; verify by
    # checking the tree never splits tiny nodes (structural proxy: node
    # count is bounded well below the unconstrained case)
    deep = forest.RandomForest(n_trees=5, min_leaf=1, seed=0).fit(X, y)
    assert sum(len(t.feature) for t in model.trees) <= sum(
        len(t.feature) for t in deep.trees
    )


def test_predict_prob_bounds():
    X, y = _blobs(n_per_class=50)
    model = forest.RandomForest(n_trees=6, seed=3).fit(X, y)
    probs = model.predict_prob(X)
    assert ((probs >= 0.0) & (probs <= 1.0)).all()


def test_permuted_labels_near_chance():
    X, y = _blobs(n_per_class=250, gap=4.0)
    rng = np.random.default_rng(123)
    shuffled = rng.permutation(y)
    result = forest.train_classifier(X, shuffled, seed=5, grid=SMALL_GRID)
    assert 0.35 <= result.test_accuracy <= 0.65


def test_grid_search_reports_all_configs():
    X, y = _blobs(n_per_class=60)
    grid = {"n_trees": (5, 10), "max_depth": (4,), "min_leaf": (1, 5)}
    result = forest.train_classifier(X, y, seed=0, grid=grid)
    assert len(result.grid_scores) == 4
    assert result.best_params in [params for params, _ in result.grid_scores]
