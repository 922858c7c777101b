"""Gradient-boosted decision trees for weighted binary log-loss.

Exact greedy split search with second-order (Newton) leaf values, from
scratch on numpy. Thresholds sit at midpoints between consecutive distinct
sorted feature values; gain ties break toward the lowest feature index and
then the lowest threshold, so training is fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, ModelError, SchemaError

MODEL_FORMAT_VERSION = 1
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GBDTConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_leaf_reg: float = 1.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ModelError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ModelError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ModelError("learning_rate must be in (0, 1]")
        if self.min_child_weight < 0 or self.l2_leaf_reg < 0:
            raise ModelError("regularization parameters must be non-negative")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_child_weight": self.min_child_weight,
            "l2_leaf_reg": self.l2_leaf_reg,
        }


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (value set)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None  # leaf output, already scaled by learning_rate

    @property
    def is_leaf(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TreeNode":
        if "value" in raw:
            return cls(value=float(raw["value"]))
        return cls(
            feature=int(raw["feature"]),
            threshold=float(raw["threshold"]),
            left=cls.from_dict(raw["left"]),
            right=cls.from_dict(raw["right"]),
        )

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def _tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        mask = X[idx, nd.feature] < nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def _sigmoid(z: np.ndarray | float):
    return 1.0 / (1.0 + np.exp(-z))


def _log_loss(y: np.ndarray, score: np.ndarray, w: np.ndarray) -> float:
    p = np.clip(_sigmoid(score), 1e-15, 1.0 - 1e-15)
    return float(np.sum(w * -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))) / np.sum(w))


def _best_split_for_feature(
    values: np.ndarray, g: np.ndarray, h: np.ndarray, lam: float, min_child: float
) -> tuple[float, float]:
    """Best (gain, threshold) for one feature given node-sorted arrays.

    `values` ascending; g, h in the same order. Returns (-inf, nan) when no
    admissible split exists. Among equal gains the lowest threshold wins.
    """
    n = values.shape[0]
    if n < 2:
        return -np.inf, np.nan
    G, H = g.sum(), h.sum()
    cg = np.cumsum(g)[:-1]
    ch = np.cumsum(h)[:-1]
    splittable = values[:-1] < values[1:]
    if min_child > 0:
        splittable &= (ch >= min_child) & ((H - ch) >= min_child)
    if not splittable.any():
        return -np.inf, np.nan
    parent = G * G / (H + lam)
    gains = np.where(
        splittable,
        0.5 * (cg**2 / (ch + lam) + (G - cg) ** 2 / (H - ch + lam) - parent),
        -np.inf,
    )
    best = int(np.argmax(gains))  # first max -> lowest threshold
    return float(gains[best]), float(0.5 * (values[best] + values[best + 1]))


def _build_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    root_orders: list[np.ndarray],
    cfg: GBDTConfig,
) -> TreeNode:
    """Grow one depth-limited tree on gradients/hessians.

    `root_orders[f]` holds all row indices sorted by feature f. Each split
    partitions these per-feature orderings into the children, so growth never
    re-sorts anything.
    """
    lam = cfg.l2_leaf_reg
    goes_left = np.empty(X.shape[0], dtype=bool)

    def grow(orders: list[np.ndarray], depth: int) -> TreeNode:
        rows = orders[0]
        G, H = g[rows].sum(), h[rows].sum()
        leaf_value = float(-cfg.learning_rate * G / (H + lam))
        if depth >= cfg.max_depth or rows.shape[0] < 2:
            return TreeNode(value=leaf_value)

        best_gain, best_feat, best_thr = _MIN_GAIN, -1, np.nan
        for f in range(X.shape[1]):
            order = orders[f]
            gain, thr = _best_split_for_feature(
                X[order, f], g[order], h[order], lam, cfg.min_child_weight
            )
            if gain > best_gain:  # strict: ties keep the lowest feature index
                best_gain, best_feat, best_thr = gain, f, thr
        if best_feat < 0:
            return TreeNode(value=leaf_value)

        goes_left[rows] = X[rows, best_feat] < best_thr
        left_orders = [o[goes_left[o]] for o in orders]
        right_orders = [o[~goes_left[o]] for o in orders]
        node = TreeNode(feature=best_feat, threshold=best_thr)
        node.left = grow(left_orders, depth + 1)
        node.right = grow(right_orders, depth + 1)
        return node

    return grow(root_orders, 0)


@dataclass
class GBDTModel:
    """Trained boosted-tree predictor: base log-odds plus an ordered tree list."""

    base_score: float
    trees: list[TreeNode]
    feature_names: tuple[str, ...]
    config: GBDTConfig
    train_loss_curve: list[float] = field(default_factory=list, repr=False)

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise SchemaError(
                f"input width {X.shape[1]} != model width {len(self.feature_names)}"
            )
        score = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            score += _tree_predict(tree, X)
        return score

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.raw_scores(X))

    def to_json(self) -> str:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "model_type": "gbdt",
            "base_score": self.base_score,
            "config": self.config.to_dict(),
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "GBDTModel":
        raw = json.loads(text)
        if raw.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelError(f"unsupported model format {raw.get('format_version')!r}")
        return cls(
            base_score=float(raw["base_score"]),
            trees=[TreeNode.from_dict(t) for t in raw["trees"]],
            feature_names=tuple(raw["feature_names"]),
            config=GBDTConfig(**raw["config"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "GBDTModel":
        return cls.from_json(Path(path).read_text())


def fit(
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray | None,
    cfg: GBDTConfig,
    feature_names: tuple[str, ...] | None = None,
) -> GBDTModel:
    """Boost `cfg.n_trees` rounds of Newton-step regression trees on log-loss."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ModelError("X must be 2-D with one row per label")
    if not np.all(np.isfinite(X)):
        raise DegenerateDataError("feature matrix contains non-finite values")
    w = (
        np.ones_like(y)
        if sample_weight is None
        else np.asarray(sample_weight, dtype=np.float64)
    )
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(X.shape[1]))

    # Canonicalize: merge identical (row, label) pairs into summed weights and
    # normalize weights to mean 1. A uniformly duplicated dataset thereby
    # reduces to the exact same arrays and trains to the bit-identical model.
    keyed = np.column_stack([X, y])
    _, unique_idx, inverse = np.unique(
        keyed, axis=0, return_index=True, return_inverse=True
    )
    if unique_idx.shape[0] < X.shape[0]:
        w_merged = np.zeros(unique_idx.shape[0])
        np.add.at(w_merged, inverse, w)
        X, y, w = X[unique_idx], y[unique_idx], w_merged
    else:
        order = np.argsort(inverse, kind="stable")
        X, y, w = X[order], y[order], w[order]
    w = w / w.mean()

    pos_frac = float(np.sum(w * y) / np.sum(w))
    if pos_frac <= 0.0 or pos_frac >= 1.0:
        raise DegenerateDataError("training data contains a single class")

    base = float(np.log(pos_frac / (1.0 - pos_frac)))
    score = np.full(X.shape[0], base)
    X = np.asfortranarray(X)
    root_orders = [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]
    trees: list[TreeNode] = []
    losses = [_log_loss(y, score, w)]
    for _ in range(cfg.n_trees):
        p = _sigmoid(score)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        tree = _build_tree(X, g, h, root_orders, cfg)
        trees.append(tree)
        score += _tree_predict(tree, X)
        losses.append(_log_loss(y, score, w))

    return GBDTModel(
        base_score=base,
        trees=trees,
        feature_names=feature_names,
        config=cfg,
        train_loss_curve=losses,
    )
