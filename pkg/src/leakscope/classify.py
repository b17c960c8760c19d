"""In-context classifiers over reduced features.

``fit_context`` snapshots a labeled context set; ``predict`` maps query
rows to label distributions in one pass.  Built-in backends are closed
form (``nearest_centroid``, ``ridge``) or lazy (``knn``); the
``external_bridge`` backend delegates to a server speaking the protocol in
:mod:`leakscope.bridge`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bridge import DEFAULT_TIMEOUT, BridgeClient
from .errors import (
    DataError,
    EmptyContext,
    EmptyTestSet,
    InvalidConfig,
    MissingClass,
    ShapeMismatch,
)
from .rocket import FeatureMatrix

KINDS = ("nearest_centroid", "knn", "ridge", "external_bridge")
BRIDGE_ENV = "LEAKSCOPE_BRIDGE_ENDPOINT"


@dataclass(frozen=True)
class ClassifierBackendSpec:
    kind: str = "nearest_centroid"
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        p = dict(self.parameters)
        if self.kind == "knn":
            p.setdefault("k", 5)
            if not isinstance(p["k"], int) or p["k"] < 1:
                raise InvalidConfig("knn needs an integer k >= 1")
        elif self.kind == "ridge":
            p.setdefault("lam", 1.0)
            if not float(p["lam"]) > 0:
                raise InvalidConfig("ridge needs lam > 0")
        elif self.kind == "nearest_centroid":
            p.setdefault("temperature", 1.0)
            if not float(p["temperature"]) > 0:
                raise InvalidConfig("temperature must be positive")
        elif self.kind == "external_bridge":
            p.setdefault("endpoint", os.environ.get(BRIDGE_ENV, ""))
            p.setdefault("timeout", DEFAULT_TIMEOUT)
            if not p["endpoint"]:
                raise InvalidConfig(f"external_bridge needs an endpoint (parameter or ${BRIDGE_ENV})")
        object.__setattr__(self, "parameters", p)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": dict(sorted(self.parameters.items()))}


@dataclass(frozen=True)
class LabelDistribution:
    probabilities: tuple[float, ...]
    argmax_label: Any


@dataclass(frozen=True, eq=False)
class FittedClassifier:
    backend: ClassifierBackendSpec
    context_rows: np.ndarray
    context_labels: tuple
    label_set: tuple
    state: dict

    @property
    def feature_dim(self) -> int:
        return self.context_rows.shape[1]


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _canonical_order(rows: np.ndarray, y: np.ndarray) -> np.ndarray:
    # sorting makes floating-point sums independent of context row order
    return np.array(sorted(range(len(y)), key=lambda i: (int(y[i]), rows[i].tobytes())), dtype=int)


def _fit_ridge(rows: np.ndarray, y: np.ndarray, n_classes: int, lam: float) -> tuple[np.ndarray, np.ndarray]:
    targets = np.eye(n_classes)[y]
    x_mean = rows.mean(axis=0)
    t_mean = targets.mean(axis=0)
    Xc, Tc = rows - x_mean, targets - t_mean
    n, p = Xc.shape
    if p <= n:
        W = np.linalg.solve(Xc.T @ Xc + lam * np.eye(p), Xc.T @ Tc)
    else:
        W = Xc.T @ np.linalg.solve(Xc @ Xc.T + lam * np.eye(n), Tc)
    return W, t_mean - x_mean @ W


def fit_context(
    spec: ClassifierBackendSpec,
    train: FeatureMatrix,
    label_set: Sequence | None = None,
) -> FittedClassifier:
    """Snapshot the context; ``label_set`` defaults to first-appearance order."""
    if len(train) == 0:
        raise EmptyContext("classifier context is empty")
    labels = tuple(label_set) if label_set is not None else tuple(dict.fromkeys(train.labels))
    index = {lab: i for i, lab in enumerate(labels)}
    unknown = [lab for lab in dict.fromkeys(train.labels) if lab not in index]
    if unknown:
        raise DataError(f"context labels {unknown} not in label set")
    present = set(train.labels)
    missing = [lab for lab in labels if lab not in present]
    if missing:
        raise MissingClass(f"labels without context rows: {missing}")
    rows = np.array(train.rows)
    y = np.array([index[lab] for lab in train.labels])
    state: dict = {}
    if spec.kind == "nearest_centroid":
        order = _canonical_order(rows, y)
        rows_s, y_s = rows[order], y[order]
        state["centroids"] = np.stack([rows_s[y_s == k].mean(axis=0) for k in range(len(labels))])
    elif spec.kind == "ridge":
        order = _canonical_order(rows, y)
        state["W"], state["b"] = _fit_ridge(rows[order], y[order], len(labels), float(spec.parameters["lam"]))
    elif spec.kind == "knn":
        state["y"] = y
    else:
        client = BridgeClient(spec.parameters["endpoint"], float(spec.parameters["timeout"]))
        try:
            state["session"] = client.fit(rows, list(train.labels), list(labels))
        except Exception:
            client.close()
            raise
        state["client"] = client
    rows.setflags(write=False)
    return FittedClassifier(spec, rows, tuple(train.labels), labels, state)


def predict_proba(clf: FittedClassifier, rows: FeatureMatrix | np.ndarray) -> np.ndarray:
    X = rows.rows if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != clf.feature_dim:
        raise ShapeMismatch(f"query width {X.shape[-1]} != context width {clf.feature_dim}")
    K = len(clf.label_set)
    if X.shape[0] == 0:
        return np.zeros((0, K))
    kind = clf.backend.kind
    if kind == "nearest_centroid":
        C = clf.state["centroids"]
        dist = np.sqrt(((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2))
        return _softmax(-dist / float(clf.backend.parameters["temperature"]))
    if kind == "ridge":
        return _softmax(X @ clf.state["W"] + clf.state["b"])
    if kind == "knn":
        y = clf.state["y"]
        k = min(int(clf.backend.parameters["k"]), len(y))
        probs = np.zeros((X.shape[0], K))
        for i, q in enumerate(X):
            dist = np.sqrt(((clf.context_rows - q) ** 2).sum(axis=1))
            nearest = np.lexsort((np.arange(len(y)), dist))[:k]
            np.add.at(probs[i], y[nearest], 1.0)
        return probs / k
    return clf.state["client"].predict(clf.state["session"], X, K)


def predict(clf: FittedClassifier, rows: FeatureMatrix | np.ndarray) -> list[LabelDistribution]:
    probs = predict_proba(clf, rows)
    return [LabelDistribution(tuple(p.tolist()), clf.label_set[int(np.argmax(p))]) for p in probs]


def predict_labels(clf: FittedClassifier, rows: FeatureMatrix | np.ndarray) -> list:
    probs = predict_proba(clf, rows)
    return [clf.label_set[int(i)] for i in np.argmax(probs, axis=1)]


def accuracy(clf: FittedClassifier, test: FeatureMatrix) -> float:
    """Fraction of test rows whose argmax prediction equals the true label."""
    if len(test) == 0:
        raise EmptyTestSet("accuracy needs at least one test row")
    predicted = predict_labels(clf, test)
    return sum(p == t for p, t in zip(predicted, test.labels)) / len(test)


def close(clf: FittedClassifier) -> None:
    client = clf.state.get("client")
    if client is not None:
        client.close()
