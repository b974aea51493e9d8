"""Outage cluster predictor: a random forest over binary alert indicators."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ingestion import DEFAULT_PRE_WINDOW, AlertLog, OutageReport, alerts_in_outage_window

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class TrainingSet:
    feature_names: list[str]
    rows: np.ndarray
    labels: np.ndarray
    outage_ids: list[str]

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.uint8).reshape(len(self.outage_ids), len(self.feature_names))
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.labels) != len(self.outage_ids):
            raise ValueError("one label per row required")

    def __len__(self) -> int:
        return len(self.outage_ids)

    def subset(self, idx: Sequence[int]) -> "TrainingSet":
        idx = list(idx)
        return TrainingSet(list(self.feature_names), self.rows[idx], self.labels[idx], [self.outage_ids[i] for i in idx])


def indicator_vector(fired: Sequence[str], feature_names: Sequence[str]) -> np.ndarray:
    fired = set(fired)
    return np.array([1 if f in fired else 0 for f in feature_names], dtype=np.uint8)


def build_training_set(
    ck, log: AlertLog, reports: Sequence[OutageReport], pre_window=DEFAULT_PRE_WINDOW
) -> TrainingSet:
    """One row per outage: indicator of alerts active in its window, labelled with its merged cluster."""
    if ck.clusters is None:
        raise ValueError("merged clusters must be computed before building a training set")
    universe = list(ck.cpdag.nodes)
    rows, labels, ids = [], [], []
    for o in sorted(reports, key=lambda r: r.outage_id):
        fired = alerts_in_outage_window(log, o, pre_window)
        row = indicator_vector(fired, universe)
        if not row.any():
            logger.warning("outage %s has no overlapping alerts; keeping an all-zero row", o.outage_id)
        rows.append(row)
        labels.append(ck.clusters.merged[o.outage_id])
        ids.append(o.outage_id)
    return TrainingSet(universe, np.array(rows).reshape(len(ids), len(universe)), np.array(labels), ids)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(p @ p)


class _Tree:
    """Binary tree over 0/1 features. Node arrays: feature (-1 for leaf), left (x=0), right (x=1), value."""

    def __init__(self, n_classes: int, max_depth: int, max_features: int, rng: np.random.Generator):
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.max_features = max_features
        self.rng = rng
        self.feature: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def _leaf(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts / counts.sum())
        return len(self.feature) - 1

    def build(self, X: np.ndarray, y: np.ndarray, depth: int = 0) -> int:
        counts = np.bincount(y, minlength=self.n_classes).astype(float)
        if depth >= self.max_depth or np.count_nonzero(counts) == 1:
            return self._leaf(counts)
        parent_impurity = _gini(counts)
        n = len(y)
        best_gain, best_f = 0.0, -1
        visited = 0
        # draw features in random order until max_features non-constant ones are scored
        for f in self.rng.permutation(X.shape[1]):
            col = X[:, f]
            ones = int(col.sum())
            if ones == 0 or ones == n:
                continue
            visited += 1
            c1 = np.bincount(y[col == 1], minlength=self.n_classes).astype(float)
            c0 = counts - c1
            child = (c0.sum() * _gini(c0) + c1.sum() * _gini(c1)) / n
            gain = parent_impurity - child
            if gain > best_gain + 1e-15:
                best_gain, best_f = gain, int(f)
            if visited >= self.max_features:
                break
        if best_f < 0:
            return self._leaf(counts)
        idx = len(self.feature)
        self.feature.append(best_f)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts / counts.sum())
        mask = X[:, best_f] == 1
        self.left[idx] = self.build(X[~mask], y[~mask], depth + 1)
        self.right[idx] = self.build(X[mask], y[mask], depth + 1)
        return idx

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], self.n_classes))
        for i, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.right[node] if x[self.feature[node]] else self.left[node]
            out[i] = self.value[node]
        return out

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": [float(v) for v in self.value[node]]}
        return {
            "feature": self.feature[node],
            "value": [float(v) for v in self.value[node]],
            "absent": self.to_dict(self.left[node]),
            "present": self.to_dict(self.right[node]),
        }

    @classmethod
    def from_dict(cls, d: dict, n_classes: int, max_depth: int) -> "_Tree":
        t = cls(n_classes, max_depth, 0, np.random.default_rng(0))

        def add(nd: dict) -> int:
            idx = len(t.feature)
            t.feature.append(int(nd.get("feature", -1)))
            t.left.append(-1)
            t.right.append(-1)
            t.value.append(np.asarray(nd["value"], dtype=float))
            if t.feature[idx] >= 0:
                t.left[idx] = add(nd["absent"])
                t.right[idx] = add(nd["present"])
            return idx

        add(d)
        return t


class OutageClusterForest(BaseEstimator, ClassifierMixin):
    """Random forest for binary features.

    Each tree sees a seeded bootstrap sample, scores up to
    ceil(sqrt(n_features)) randomly drawn non-constant features per split,
    and takes the one with the largest Gini decrease. Growth stops on a
    pure node, at ``max_depth``, or when no split lowers impurity.
    """

    def __init__(self, n_estimators: int = 50, max_depth: int = 25, random_state: int = 0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.uint8)
        if not np.isin(X, (0, 1)).all():
            raise ValueError("features must be binary")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("training set needs at least two distinct labels")
        self.n_features_in_ = X.shape[1]
        max_features = max(1, math.ceil(math.sqrt(X.shape[1])))
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_estimators)
        self.estimators_ = []
        n = X.shape[0]
        for ss in seeds:
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, n, size=n)
            tree = _Tree(len(self.classes_), self.max_depth, max_features, rng)
            tree.build(X[boot], y_enc[boot])
            self.estimators_.append(tree)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "estimators_")
        X = check_array(np.atleast_2d(X), dtype=np.uint8)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        proba = sum(t.leaf_values(X) for t in self.estimators_) / len(self.estimators_)
        return proba / proba.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "estimators_")
        return {
            "version": MODEL_FORMAT_VERSION,
            "params": self.get_params(),
            "classes": [int(c) for c in self.classes_],
            "feature_names": list(getattr(self, "feature_names_", [])),
            "n_features": int(self.n_features_in_),
            "trees": [t.to_dict() for t in self.estimators_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutageClusterForest":
        if not isinstance(d, dict) or d.get("version") != MODEL_FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model version {d.get('version') if isinstance(d, dict) else None}")
        try:
            model = cls(**d["params"])
            model.classes_ = np.asarray(d["classes"], dtype=int)
            model.n_features_in_ = int(d["n_features"])
            model.feature_names_ = list(d.get("feature_names", []))
            model.estimators_ = [_Tree.from_dict(t, len(model.classes_), model.max_depth) for t in d["trees"]]
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"corrupted model document: {exc!r}") from None
        return model


def train(ts: TrainingSet, n_trees: int = 50, max_depth: int = 25, seed: int = 0) -> OutageClusterForest:
    """Fit on rows sorted by outage_id, so row order in ``ts`` does not matter."""
    if len(ts.feature_names) == 0:
        raise ValueError("training set has no features")
    order = np.argsort(np.array(ts.outage_ids, dtype=object), kind="stable")
    model = OutageClusterForest(n_estimators=n_trees, max_depth=max_depth, random_state=seed)
    model.fit(ts.rows[order], ts.labels[order])
    model.feature_names_ = list(ts.feature_names)
    return model


def predict_proba(model: OutageClusterForest, x) -> dict[int, float]:
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != model.n_features_in_:
        raise ValueError(f"expected a vector of length {model.n_features_in_}")
    p = model.predict_proba(x[None, :])[0]
    return {int(c): float(v) for c, v in zip(model.classes_, p)}


def top_k_precision(model, test: TrainingSet, K: int) -> float:
    """Share of rows whose true cluster is among the K most probable (ties to the lower cluster id)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(test) == 0:
        raise ValueError("empty test set")
    proba = model.predict_proba(test.rows)
    classes = np.asarray(model.classes_)
    hits = 0
    for p, label in zip(proba, test.labels):
        order = sorted(range(len(classes)), key=lambda j: (-p[j], classes[j]))
        hits += int(label in set(classes[order[:K]].tolist()))
    return hits / len(test)


def train_test_split(ts: TrainingSet, test_fraction: float = 0.3, seed: int = 0) -> tuple[TrainingSet, TrainingSet]:
    """Seeded, non-stratified shuffle split."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ts))
    n_test = int(round(len(ts) * test_fraction))
    return ts.subset(sorted(perm[n_test:])), ts.subset(sorted(perm[:n_test]))


def save_model(model: OutageClusterForest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> OutageClusterForest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupted model file {path}: {exc.msg}") from None
    return OutageClusterForest.from_dict(doc)
