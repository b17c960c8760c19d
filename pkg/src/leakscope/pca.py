"""PCA reduction of kernel features, fitted on training rows only."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _util
from .errors import InvalidConfig, ShapeMismatch, TooFewRows
from .rocket import FeatureMatrix


@dataclass(frozen=True, eq=False)
class Projection:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    requested_d: int
    notice: str = ""

    def __post_init__(self):
        for name in ("mean", "components", "explained_variance"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.components.ndim != 2 or self.components.shape[1] != self.mean.shape[0]:
            raise ShapeMismatch("components must be (r, feature_dim)")

    @property
    def r_effective(self) -> int:
        return self.components.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "requested_d": self.requested_d,
            "r_effective": self.r_effective,
            "notice": self.notice,
            "mean": self.mean.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "components": self.components.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Projection":
        comps = np.asarray(data["components"], dtype=np.float64).reshape(-1, len(data["mean"]))
        return cls(data["mean"], comps, data["explained_variance"], data["requested_d"], data.get("notice", ""))


def save_projection(proj: Projection, path: str | Path) -> None:
    _util.write_json(path, proj.to_dict())


def load_projection(path: str | Path) -> Projection:
    return Projection.from_dict(_util.read_json(path))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each component is made positive
    pivot = np.abs(components).argmax(axis=1)
    signs = np.sign(components[np.arange(len(components)), pivot])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit_pca(train_features: FeatureMatrix | np.ndarray, d: int) -> Projection:
    X = train_features.rows if isinstance(train_features, FeatureMatrix) else np.asarray(train_features, float)
    n, p = X.shape
    if n < 2:
        raise TooFewRows(f"PCA needs at least 2 training rows, got {n}")
    if d < 1:
        raise InvalidConfig(f"d must be positive, got {d}")
    r = min(d, n - 1, p)
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    components = _fix_signs(vt[:r])
    variance = s[:r] ** 2 / (n - 1)
    notice = ""
    if r < d:
        notice = f"requested d={d} reduced to {r} (rows={n}, features={p})"
    return Projection(mean, components, variance, d, notice)


def project(proj: Projection, features: FeatureMatrix | np.ndarray) -> FeatureMatrix | np.ndarray:
    """Center with the training mean and map onto the components.

    Returns the same container type it was given.
    """
    X = features.rows if isinstance(features, FeatureMatrix) else np.asarray(features, float)
    if X.ndim != 2 or X.shape[1] != proj.feature_dim:
        raise ShapeMismatch(f"feature width {X.shape[-1]} != projection input {proj.feature_dim}")
    Z = (X - proj.mean) @ proj.components.T
    if isinstance(features, FeatureMatrix):
        return FeatureMatrix(Z, features.labels, proj.r_effective)
    return Z


def reconstruct(proj: Projection, reduced: np.ndarray) -> np.ndarray:
    return np.asarray(reduced) @ proj.components + proj.mean
