"""From-scratch GBDT: losses, splits against a brute-force oracle, serialization."""

import numpy as np
import pytest

from atrisk import gbdt
from atrisk.errors import DegenerateDataError, ModelError
from atrisk.evaluation import auc
from atrisk.gbdt import GBDTConfig, GBDTModel, TreeNode


def random_fixture(seed, n=120, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.4).astype(float)
    w = rng.uniform(0.2, 1.0, size=n)
    return X, y, w


@pytest.mark.parametrize("seed", range(20))
def test_training_loss_non_increasing(seed):
    X, y, w = random_fixture(seed)
    model = gbdt.fit(X, y, w, GBDTConfig(n_trees=25, max_depth=3))
    curve = np.array(model.train_loss_curve)
    assert len(curve) == 26
    assert np.all(np.diff(curve) <= 1e-9)


def test_separable_fixture_reaches_auc_one():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 3))
    y = (X[:, 0] > 0).astype(float)
    model = gbdt.fit(X, y, None, GBDTConfig(n_trees=5, max_depth=3))
    assert auc(model.predict_proba(X), y) == 1.0


def test_zero_trees_predicts_positive_fraction():
    X, y, _ = random_fixture(2)
    model = gbdt.fit(X, y, None, GBDTConfig(n_trees=0))
    np.testing.assert_allclose(model.predict_proba(X), np.full(len(y), y.mean()))


def test_weighted_base_score():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([1.0, 0.0, 0.0])
    w = np.array([3.0, 1.0, 2.0])
    model = gbdt.fit(X, y, w, GBDTConfig(n_trees=0))
    assert model.predict_proba(X)[0] == pytest.approx(0.5)


def test_serialization_round_trip_bit_identical(tmp_path):
    X, y, w = random_fixture(3)
    model = gbdt.fit(X, y, w, GBDTConfig(n_trees=15, max_depth=4))
    path = tmp_path / "model.json"
    model.save(path)
    loaded = GBDTModel.load(path)
    assert loaded.to_json() == model.to_json()
    np.testing.assert_array_equal(loaded.raw_scores(X), model.raw_scores(X))


def test_serialization_rejects_unknown_format():
    with pytest.raises(ModelError):
        GBDTModel.from_json('{"format_version": 99}')


def test_training_is_deterministic():
    X, y, w = random_fixture(4)
    m1 = gbdt.fit(X, y, w, GBDTConfig(n_trees=10))
    m2 = gbdt.fit(X, y, w, GBDTConfig(n_trees=10))
    assert m1.to_json() == m2.to_json()


@pytest.mark.parametrize("seed", range(6))
def test_duplicated_dataset_trains_identical_model(seed):
    X, y, w = random_fixture(seed, n=80)
    cfg = GBDTConfig(n_trees=12, max_depth=3)
    once = gbdt.fit(X, y, w, cfg)
    twice = gbdt.fit(
        np.vstack([X, X]), np.concatenate([y, y]), np.concatenate([w, w]), cfg
    )
    assert once.to_json() == twice.to_json()


def brute_force_best_split(X, g, h, lam, min_child):
    """Enumerate every (feature, midpoint) split and return the best gain."""
    n, d = X.shape
    G, H = g.sum(), h.sum()
    parent = G * G / (H + lam)
    best = (-np.inf, None, None)
    for f in range(d):
        for thr in np.unique(X[:, f]):
            left = X[:, f] < thr
            if not left.any() or left.all():
                continue
            hl, hr = h[left].sum(), h[~left].sum()
            if min_child > 0 and (hl < min_child or hr < min_child):
                continue
            gl = g[left].sum()
            gain = 0.5 * (
                gl**2 / (hl + lam) + (G - gl) ** 2 / (hr + lam) - parent
            )
            if gain > best[0] + 1e-12:
                best = (gain, f, thr)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_root_split_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(40, 3)), 1)  # rounded values force ties
    y = (rng.random(40) < 0.5).astype(float)
    cfg = GBDTConfig(n_trees=1, max_depth=1, learning_rate=1.0)
    model = gbdt.fit(X, y, None, cfg)
    root = model.trees[0]

    p0 = y.mean()
    g = np.full(40, p0) - y
    h = np.full(40, p0 * (1 - p0))
    gain, f, _thr = brute_force_best_split(X, g, h, cfg.l2_leaf_reg, cfg.min_child_weight)
    if root.is_leaf:
        assert gain < 1e-9
        return
    assert root.feature == f
    left = X[:, root.feature] < root.threshold
    oracle_left = X[:, f] < _thr
    np.testing.assert_array_equal(left, oracle_left)


def test_thresholds_are_midpoints():
    X = np.array([[1.0], [2.0], [5.0], [6.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    cfg = GBDTConfig(n_trees=1, max_depth=1, min_child_weight=0.0)
    model = gbdt.fit(X, y, None, cfg)
    assert model.trees[0].threshold == pytest.approx(3.5)


def test_tie_breaks_toward_lowest_feature_index():
    # identical columns: the split must land on feature 0
    col = np.array([[0.0], [0.0], [1.0], [1.0]])
    X = np.hstack([col, col])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    cfg = GBDTConfig(n_trees=1, max_depth=1, min_child_weight=0.0)
    model = gbdt.fit(X, y, None, cfg)
    assert model.trees[0].feature == 0


def test_max_depth_respected():
    X, y, w = random_fixture(5)
    for depth in (1, 2, 3):
        model = gbdt.fit(X, y, w, GBDTConfig(n_trees=8, max_depth=depth))
        assert max(t.depth() for t in model.trees) <= depth


def test_min_child_weight_blocks_small_leaves():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 0.0, 1.0])
    blocked = gbdt.fit(X, y, None, GBDTConfig(n_trees=1, max_depth=1, min_child_weight=10.0))
    assert blocked.trees[0].is_leaf


def test_single_class_raises():
    X = np.zeros((10, 2))
    with pytest.raises(DegenerateDataError):
        gbdt.fit(X, np.zeros(10), None, GBDTConfig())
    with pytest.raises(DegenerateDataError):
        gbdt.fit(X, np.ones(10), None, GBDTConfig())


def test_non_finite_features_rejected():
    X = np.array([[1.0], [np.inf]])
    with pytest.raises(DegenerateDataError):
        gbdt.fit(X, np.array([0.0, 1.0]), None, GBDTConfig())


def test_config_validation():
    with pytest.raises(ModelError):
        GBDTConfig(n_trees=-1)
    with pytest.raises(ModelError):
        GBDTConfig(max_depth=0)
    with pytest.raises(ModelError):
        GBDTConfig(learning_rate=0.0)
    with pytest.raises(ModelError):
        GBDTConfig(l2_leaf_reg=-0.1)


def test_tree_node_round_trip():
    node = TreeNode(
        feature=2,
        threshold=0.25,
        left=TreeNode(value=-0.5),
        right=TreeNode(feature=0, threshold=-1.0,
                       left=TreeNode(value=0.1), right=TreeNode(value=0.9)),
    )
    again = TreeNode.from_dict(node.to_dict())
    assert again.to_dict() == node.to_dict()
    assert again.depth() == 2


def test_prediction_width_validation():
    X, y, _ = random_fixture(6)
    model = gbdt.fit(X, y, None, GBDTConfig(n_trees=2))
    with pytest.raises(Exception):
        model.predict_proba(np.zeros((3, 2)))
