"""Random forest of CART trees with out-of-bag statistics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from . import _tree
from .errors import ConfigError, SchemaError, TrainingError
from .features import FeatureMatrix, feature_vector
from .ingest import BinaryLabel

N_CLASSES = 2
SEED_MOD = 2 ** 64


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    split_features: Union[str, int] = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be positive or unbounded")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be at least 2")
        if self.split_features != "sqrt" and int(self.split_features) < 1:
            raise ConfigError("split_features must be 'sqrt' or a positive count")
        if not 0 <= int(self.seed) < SEED_MOD:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def resolve_split_features(self, n_features: int) -> int:
        if self.split_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        k = int(self.split_features)
        if k > n_features:
            raise ConfigError(f"split_features={k} exceeds the {n_features} available features")
        return k


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _tree.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [repr(v) for v in self.threshold.tolist()],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [[repr(v) for v in row] for row in self.value.tolist()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array([float(v) for v in d["threshold"]], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array([[float(v) for v in row] for row in d["value"]], dtype=np.float64),
        )


@dataclass
class ForestModel:
    trees: list[Tree]
    feature_names: list[str]
    oob_accuracy: float
    seed: int
    hyperparams: ForestHyperparams = field(default_factory=ForestHyperparams)
    # per training row, in the caller's row order; NaN where never out-of-bag
    oob_proba: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "oob_accuracy": repr(float(self.oob_accuracy)),
            "seed": int(self.seed),
            "hyperparams": asdict(self.hyperparams),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            [Tree.from_dict(t) for t in d["trees"]],
            list(d["feature_names"]),
            float(d["oob_accuracy"]),
            int(d["seed"]),
            ForestHyperparams(**d["hyperparams"]),
        )


def canonical_order(fm: FeatureMatrix) -> np.ndarray:
    """Row permutation sorting by trip_id, then by feature values.

    Training on the canonically ordered rows makes the model independent of
    the order rows arrive in. Feature values stand in for the window offset,
    which the feature CSV does not carry.
    """
    keys = [fm.X[:, j] for j in range(fm.X.shape[1] - 1, -1, -1)]
    _, trip_rank = np.unique(fm.trip_ids.astype(str), return_inverse=True)
    keys.append(trip_rank)
    return np.lexsort(keys)


def _grow(X, y, n_classes, hp: ForestHyperparams, k_split: int, index: int):
    # the (seed, index) pair keys the stream, so forests seeded s and s+1
    # never share a tree's bootstrap
    rng = np.random.default_rng([int(hp.seed), index])
    n = len(y)
    boot = rng.integers(0, n, size=n)
    split_seed = int(rng.integers(0, 2 ** 63))
    arrays = _tree.build_tree(
        X, y, boot, n_classes, k_split,
        -1 if hp.max_depth is None else int(hp.max_depth),
        int(hp.min_samples_split), split_seed,
    )
    return Tree(*arrays), boot


def _argmax_low(p: np.ndarray) -> np.ndarray:
    """Row-wise argmax; exact ties go to the lowest class index."""
    return np.argmax(p, axis=-1)


def train_forest(dataset: FeatureMatrix, hp: ForestHyperparams = ForestHyperparams(),
                 n_jobs: int = 1) -> ForestModel:
    """Bootstrap-bagged Gini trees. Output is identical for any ``n_jobs``."""
    if dataset.X.shape[1] == 0:
        raise TrainingError("cannot train on zero features")
    if len(dataset) < 2:
        raise TrainingError("need at least two samples")
    if not dataset.labeled:
        raise TrainingError("training data must be fully labeled")
    if len(np.unique(dataset.y)) < 2:
        raise TrainingError("training data contains a single class")
    k_split = hp.resolve_split_features(dataset.X.shape[1])

    order = canonical_order(dataset)
    X = np.ascontiguousarray(dataset.X[order])
    y = np.ascontiguousarray(dataset.y[order])

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            grown = list(pool.map(lambda i: _grow(X, y, N_CLASSES, hp, k_split, i),
                                  range(hp.n_trees)))
    else:
        grown = [_grow(X, y, N_CLASSES, hp, k_split, i) for i in range(hp.n_trees)]

    n = len(y)
    votes = np.zeros((n, N_CLASSES))
    prob_sum = np.zeros((n, N_CLASSES))
    seen = np.zeros(n, dtype=np.int64)
    for tree, boot in grown:
        oob = np.bincount(boot, minlength=n) == 0
        if not oob.any():
            continue
        leaf_values = tree.value[tree.apply(X[oob])]
        prob_sum[oob] += leaf_values
        votes[np.flatnonzero(oob), _argmax_low(leaf_values)] += 1
        seen[oob] += 1
    has_oob = seen > 0
    if has_oob.any():
        oob_accuracy = float(np.mean(_argmax_low(votes[has_oob]) == y[has_oob]))
    else:
        oob_accuracy = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_sorted = prob_sum / seen[:, None]
    oob_proba = np.empty_like(oob_sorted)
    oob_proba[order] = oob_sorted

    return ForestModel([t for t, _ in grown], list(dataset.feature_names), oob_accuracy,
                       int(hp.seed), hp, oob_proba)


def _design(model: ForestModel, data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        if data.feature_names == model.feature_names:
            return data.X
        return data.project(model.feature_names).X
    if isinstance(data, Mapping):
        return feature_vector(data, model.feature_names)[None, :]
    X = np.asarray(data, dtype=np.float64)
    X = X[None, :] if X.ndim == 1 else X
    if X.shape[1] != len(model.feature_names):
        raise SchemaError(
            f"expected {len(model.feature_names)} features, got {X.shape[1]}")
    return X


def predict_proba(model: ForestModel, x) -> np.ndarray:
    """Mean leaf class-frequency vector over trees.

    ``x`` may be a name->value mapping or a 1-D vector (returns shape (2,)),
    or a FeatureMatrix / 2-D array (returns shape (n, 2)).
    """
    single = isinstance(x, Mapping) or (not isinstance(x, FeatureMatrix) and np.ndim(x) == 1)
    X = np.ascontiguousarray(_design(model, x), dtype=np.float64)
    acc = np.zeros((X.shape[0], N_CLASSES))
    for tree in model.trees:
        acc += tree.value[tree.apply(X)]
    proba = acc / len(model.trees)
    return proba[0] if single else proba


def predict_label(model: ForestModel, x):
    """Argmax of ``predict_proba``; ties go to class 0."""
    proba = predict_proba(model, x)
    if proba.ndim == 1:
        return BinaryLabel(int(_argmax_low(proba)))
    return _argmax_low(proba)


def labels_from_proba(proba: np.ndarray) -> np.ndarray:
    return _argmax_low(np.asarray(proba))
