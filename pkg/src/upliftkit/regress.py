"""Regression machinery shared by nuisance and effect models.

Two regressor kinds behind one contract:

* :class:`ForestRegressor` — bagged regression trees with exact
  variance-reduction split search over midpoints of sorted unique feature
  values, per-split feature subsampling, and mean-of-leaf prediction.
* :class:`ConstantRegressor` — predicts a single value (the training mean,
  or a supplied constant such as 0 for ablations).

Everything is seed-deterministic: each tree's bootstrap and feature-choice
stream is derived from ``(seed, tree_index)``, so results are independent of
any parallel scheduling, and ties in split gain break to the lowest feature
index and then the lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

FOREST_FORMAT = "forest-v1"
CONSTANT_FORMAT = "constant-v1"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 50
    feature_subsample: float = 1.0 / 3.0
    row_subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValidationError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )
        for name in ("feature_subsample", "row_subsample"):
            frac = getattr(self, name)
            if not (0.0 < frac <= 1.0):
                raise ValidationError(f"{name} must lie in (0, 1], got {frac}")


@dataclass(frozen=True)
class ConstantConfig:
    """Constant predictor spec; ``value=None`` stores the training mean."""

    value: float | None = None


class _Tree:
    """Flat-array regression tree; ``feature == -1`` marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "_Tree":
        return cls(
            payload["feature"],
            payload["threshold"],
            payload["left"],
            payload["right"],
            payload["value"],
        )


def _best_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray, msl: int):
    """Exact search over midpoints; returns (feature, threshold) or None.

    Gain is the squared-error reduction versus the parent node. Ties break
    to the lowest feature index (ascending scan with strict improvement)
    and, within a feature, to the lowest threshold (first argmax).
    """
    n = y.shape[0]
    if n < 2 * msl:
        return None
    total1 = y.sum()
    total2 = float(y @ y)
    parent_sse = total2 - total1 * total1 / n

    cols = X[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = y[order]
    s1 = np.cumsum(ys, axis=0)[:-1]
    s2 = np.cumsum(ys * ys, axis=0)[:-1]
    cnt_l = np.arange(1, n, dtype=float)[:, None]
    cnt_r = n - cnt_l
    sse_l = s2 - s1 * s1 / cnt_l
    sse_r = (total2 - s2) - (total1 - s1) * (total1 - s1) / cnt_r
    gains = parent_sse - sse_l - sse_r
    invalid = xs[:-1] >= xs[1:]
    gains[invalid] = -np.inf
    lo, hi = msl - 1, n - msl
    if lo > 0:
        gains[:lo] = -np.inf
    gains[hi:] = -np.inf

    best = None
    best_gain = 0.0
    for col, j in enumerate(feats):
        i = int(np.argmax(gains[:, col]))
        g = gains[i, col]
        if g > best_gain:
            best_gain = float(g)
            best = (int(j), float((xs[i, col] + xs[i + 1, col]) / 2.0))
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, rng) -> _Tree:
    d = X.shape[1]
    n_feats = max(1, int(round(cfg.feature_subsample * d)))
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        y_node = y[rows]
        value.append(float(y_node.mean()))
        if depth >= cfg.max_depth or rows.shape[0] < 2 * cfg.min_samples_leaf:
            return node
        feats = np.sort(rng.choice(d, size=n_feats, replace=False))
        split = _best_split(X[rows], y_node, feats, cfg.min_samples_leaf)
        if split is None:
            return node
        j, thr = split
        go_left = X[rows, j] <= thr
        feature[node] = j
        threshold[node] = thr
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return _Tree(feature, threshold, left, right, value)


class ForestRegressor:
    """Bagged regression-tree ensemble; immutable after fitting."""

    kind = "forest"

    def __init__(self, config: ForestConfig, trees: list[_Tree], input_dim: int):
        self.config = config
        self.trees_ = trees
        self.input_dim = input_dim

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_predict_input(X, self.input_dim)
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)

    def predict_tree(self, index: int, X: np.ndarray) -> np.ndarray:
        X = _check_predict_input(X, self.input_dim)
        return self.trees_[index].predict(X)

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT,
            "config": asdict(self.config),
            "input_dim": self.input_dim,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ForestRegressor":
        if payload.get("format") != FOREST_FORMAT:
            raise ValidationError(f"unsupported forest format: {payload.get('format')!r}")
        trees = [_Tree.from_dict(t) for t in payload["trees"]]
        return cls(ForestConfig(**payload["config"]), trees, int(payload["input_dim"]))


class ConstantRegressor:
    kind = "constant"

    def __init__(self, value: float, input_dim: int):
        self.value = float(value)
        self.input_dim = input_dim

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_predict_input(X, self.input_dim)
        return np.full(X.shape[0], self.value)

    def to_dict(self) -> dict:
        return {"format": CONSTANT_FORMAT, "value": self.value, "input_dim": self.input_dim}

    @classmethod
    def from_dict(cls, payload: dict) -> "ConstantRegressor":
        if payload.get("format") != CONSTANT_FORMAT:
            raise ValidationError(
                f"unsupported constant format: {payload.get('format')!r}"
            )
        return cls(float(payload["value"]), int(payload["input_dim"]))


Regressor = ForestRegressor | ConstantRegressor


def fit_regressor(config, X: np.ndarray, y: np.ndarray) -> Regressor:
    """Fit a regressor of the configured kind on ``(X, y)``.

    Forest trees are each fit on a seeded bootstrap row sample (the stream
    derives from ``(config.seed, tree_index)``); the constant spec stores
    ``mean(y)`` unless a fixed value was supplied.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-d matrix")
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValidationError("cannot fit on empty data")
    if y.shape != (X.shape[0],):
        raise ValidationError("y must be a vector matching the rows of X")
    if not np.isfinite(y).all():
        raise ValidationError("y contains non-finite values")

    if isinstance(config, ConstantConfig):
        value = float(np.mean(y)) if config.value is None else float(config.value)
        return ConstantRegressor(value, X.shape[1])
    if not isinstance(config, ForestConfig):
        raise ValidationError(f"unknown regressor config: {type(config).__name__}")
    if X.shape[0] < config.min_samples_leaf:
        raise ValidationError(
            f"need at least min_samples_leaf={config.min_samples_leaf} rows, got {X.shape[0]}"
        )
    trees = []
    n = X.shape[0]
    m = max(1, int(round(config.row_subsample * n)))
    for t in range(config.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, t)))
        rows = rng.integers(0, n, size=m)
        trees.append(_grow_tree(X[rows], y[rows], config, rng))
    return ForestRegressor(config, trees, X.shape[1])


def predict(model: Regressor, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def _check_predict_input(X, input_dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != input_dim:
        raise ValidationError(
            f"expected an (m, {input_dim}) feature matrix, got shape {np.shape(X)}"
        )
    return X


def save_regressor(model: Regressor, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_regressor(path) -> Regressor:
    payload = json.loads(Path(path).read_text())
    return regressor_from_dict(payload)


def regressor_from_dict(payload: dict) -> Regressor:
    fmt = payload.get("format")
    if fmt == FOREST_FORMAT:
        return ForestRegressor.from_dict(payload)
    if fmt == CONSTANT_FORMAT:
        return ConstantRegressor.from_dict(payload)
    raise ValidationError(f"unknown regressor format: {fmt!r}")
