"""Random convolutional kernel features (PPV and max per kernel).

Each kernel is bound to one channel of the multivariate trace, so a bank
of ``L`` kernels always yields exactly ``2L`` features: feature ``2k`` is
the proportion of positive responses of kernel ``k`` and feature ``2k+1``
its maximum response.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from . import _util
from .errors import DataError, SeriesTooShort, ShapeMismatch
from .traces import Dataset, Trace

CANDIDATE_LENGTHS = (7, 9, 11)
STD_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class Kernel:
    weights: np.ndarray
    bias: float
    dilation: int
    padding: bool
    channel_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.dilation < 1:
            raise DataError("dilation must be >= 1")

    @property
    def length(self) -> int:
        return len(self.weights)

    @property
    def pad(self) -> int:
        return ((self.length - 1) * self.dilation) // 2 if self.padding else 0

    @property
    def span(self) -> int:
        return (self.length - 1) * self.dilation + 1


@dataclass(frozen=True, eq=False)
class KernelBank:
    """Flat storage of ``L`` kernels; ``weights`` is the concatenation."""

    weights: np.ndarray
    lengths: np.ndarray
    biases: np.ndarray
    dilations: np.ndarray
    paddings: np.ndarray
    channel_indices: np.ndarray
    n_channels: int
    series_length: int
    normalize_per_channel: bool = True
    seed: int = 0

    def __post_init__(self):
        for name, dtype in (
            ("weights", np.float64),
            ("lengths", np.int64),
            ("biases", np.float64),
            ("dilations", np.int64),
            ("paddings", np.int64),
            ("channel_indices", np.int64),
        ):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.lengths.sum() != len(self.weights):
            raise DataError("kernel lengths do not add up to the weight vector")
        if len({len(self.lengths), len(self.biases), len(self.dilations), len(self.paddings), len(self.channel_indices)}) != 1:
            raise DataError("kernel parameter arrays differ in length")
        if len(self.channel_indices) and self.channel_indices.max() >= self.n_channels:
            raise DataError("channel_index out of range")

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def feature_dim(self) -> int:
        return 2 * len(self)

    @property
    def kernels(self) -> list[Kernel]:
        offsets = np.concatenate([[0], np.cumsum(self.lengths)])
        return [
            Kernel(
                self.weights[offsets[i] : offsets[i + 1]],
                float(self.biases[i]),
                int(self.dilations[i]),
                bool(self.paddings[i]),
                int(self.channel_indices[i]),
            )
            for i in range(len(self))
        ]

    @classmethod
    def from_kernels(cls, kernels: Sequence[Kernel], n_channels: int, series_length: int, normalize_per_channel: bool = True, seed: int = 0) -> "KernelBank":
        return cls(
            weights=np.concatenate([k.weights for k in kernels]) if kernels else np.zeros(0),
            lengths=[k.length for k in kernels],
            biases=[k.bias for k in kernels],
            dilations=[k.dilation for k in kernels],
            paddings=[int(k.padding) for k in kernels],
            channel_indices=[k.channel_index for k in kernels],
            n_channels=n_channels,
            series_length=series_length,
            normalize_per_channel=normalize_per_channel,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "series_length": self.series_length,
            "normalize_per_channel": self.normalize_per_channel,
            "seed": self.seed,
            "kernels": [
                {
                    "weights": k.weights.tolist(),
                    "bias": k.bias,
                    "dilation": k.dilation,
                    "padding": k.padding,
                    "channel_index": k.channel_index,
                }
                for k in self.kernels
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelBank":
        kernels = [Kernel(**k) for k in data["kernels"]]
        return cls.from_kernels(
            kernels, data["n_channels"], data["series_length"], data.get("normalize_per_channel", True), data.get("seed", 0)
        )


def save_kernels(bank: KernelBank, path: str | Path) -> None:
    _util.write_json(path, bank.to_dict())


def load_kernels(path: str | Path) -> KernelBank:
    return KernelBank.from_dict(_util.read_json(path))


@functools.lru_cache(maxsize=32)
def generate_kernels(
    L: int,
    n_channels: int,
    series_length: int,
    seed: int,
    normalize_per_channel: bool = True,
) -> KernelBank:
    if series_length < CANDIDATE_LENGTHS[0]:
        raise SeriesTooShort(f"series_length {series_length} < {CANDIDATE_LENGTHS[0]}")
    if L < 1 or n_channels < 1:
        raise DataError("L and n_channels must be positive")
    # lengths that cannot fit at dilation 1 are excluded from the draw
    candidates = np.array([n for n in CANDIDATE_LENGTHS if n <= series_length])
    rng = _util.derive_rng(seed, "kernels")
    lengths = rng.choice(candidates, L)
    weights = []
    biases = np.empty(L)
    dilations = np.empty(L, dtype=np.int64)
    paddings = np.empty(L, dtype=np.int64)
    for i, n in enumerate(lengths):
        w = rng.standard_normal(n)
        weights.append(w - w.mean())
        biases[i] = rng.uniform(-1, 1)
        x = rng.uniform(0, np.log2((series_length - 1) / (n - 1)))
        dilations[i] = max(1, int(np.floor(2**x)))
        paddings[i] = rng.integers(2)
    channel_indices = rng.integers(0, n_channels, L)
    return KernelBank(
        np.concatenate(weights), lengths, biases, dilations, paddings, channel_indices,
        n_channels, series_length, normalize_per_channel, seed,
    )


def naive_convolve(kernel: Kernel, series: Sequence[float]) -> list[float]:
    """Reference dilated cross-correlation, written as plainly as possible."""
    series = [float(v) for v in series]
    pad = kernel.pad
    padded = [0.0] * pad + series + [0.0] * pad
    n_out = len(padded) - (kernel.length - 1) * kernel.dilation
    if n_out < 1:
        raise SeriesTooShort(f"series of length {len(series)} shorter than kernel span {kernel.span}")
    out = []
    for i in range(n_out):
        total = kernel.bias
        for j, w in enumerate(kernel.weights):
            total += float(w) * padded[i + j * kernel.dilation]
        out.append(total)
    return out


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Z-normalize along the last axis with a floored standard deviation."""
    mean = values.mean(axis=-1, keepdims=True)
    std = np.maximum(values.std(axis=-1, keepdims=True), STD_FLOOR)
    return (values - mean) / std


@numba.njit(cache=True)
def _apply_kernel(x, weights, length, bias, dilation, padding):
    n = x.shape[0]
    pad = ((length - 1) * dilation) // 2 if padding else 0
    end = n + pad - (length - 1) * dilation
    n_out = end + pad
    ppv = 0
    mx = -np.inf
    for i in range(-pad, end):
        s = bias
        idx = i
        for j in range(length):
            if idx >= 0 and idx < n:
                s += weights[j] * x[idx]
            idx += dilation
        if s > mx:
            mx = s
        if s > 0:
            ppv += 1
    return ppv / n_out, mx


@numba.njit(cache=True)
def _features_one(x, weights, lengths, biases, dilations, paddings, channels, out):
    a = 0
    for k in range(lengths.shape[0]):
        b = a + lengths[k]
        ppv, mx = _apply_kernel(x[channels[k]], weights[a:b], lengths[k], biases[k], dilations[k], paddings[k])
        out[2 * k] = ppv
        out[2 * k + 1] = mx
        a = b


@numba.njit(cache=True, parallel=True)
def _features_parallel(X, weights, lengths, biases, dilations, paddings, channels, out):
    for i in numba.prange(X.shape[0]):
        _features_one(X[i], weights, lengths, biases, dilations, paddings, channels, out[i])


def _prepared(bank: KernelBank, values: np.ndarray) -> np.ndarray:
    # values: (n_traces, n_channels, n_samples)
    if values.shape[1:] != (bank.n_channels, bank.series_length):
        raise ShapeMismatch(
            f"trace shape {values.shape[1:]} does not match bank ({bank.n_channels}, {bank.series_length})"
        )
    x = normalize_rows(values) if bank.normalize_per_channel else values
    return np.ascontiguousarray(x, dtype=np.float64)


def _args(bank: KernelBank):
    return bank.weights, bank.lengths, bank.biases, bank.dilations, bank.paddings, bank.channel_indices


def apply_kernels(bank: KernelBank, trace: Trace) -> np.ndarray:
    x = _prepared(bank, trace.values[None])[0]
    out = np.empty(bank.feature_dim)
    _features_one(x, *_args(bank), out)
    return out


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    rows: np.ndarray
    labels: tuple
    feature_dim: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.feature_dim:
            raise ShapeMismatch(f"rows shape {rows.shape} does not match feature_dim {self.feature_dim}")
        if len(self.labels) != rows.shape[0]:
            raise ShapeMismatch("labels not aligned with rows")
        if not np.isfinite(rows).all():
            raise DataError("feature matrix contains non-finite values")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def subset(self, indices: Sequence[int]) -> "FeatureMatrix":
        idx = list(indices)
        return FeatureMatrix(self.rows[idx], [self.labels[i] for i in idx], self.feature_dim)

    def to_dict(self) -> dict:
        return {"feature_dim": self.feature_dim, "labels": list(self.labels), "rows": self.rows.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureMatrix":
        rows = np.asarray(data["rows"], dtype=np.float64).reshape(-1, data["feature_dim"])
        return cls(rows, data["labels"], data["feature_dim"])


def save_features(fm: FeatureMatrix, path: str | Path) -> None:
    _util.write_json(path, fm.to_dict())


def load_features(path: str | Path) -> FeatureMatrix:
    return FeatureMatrix.from_dict(_util.read_json(path))


def transform_values(bank: KernelBank, values: np.ndarray, parallel: bool | None = None) -> np.ndarray:
    """Feature rows for a stacked (n_traces, n_channels, n_samples) array.

    ``parallel=None`` uses the threaded path only when numba has more than
    one thread; both paths give bit-identical rows.
    """
    if parallel is None:
        parallel = numba.config.NUMBA_NUM_THREADS > 1
    out = np.empty((values.shape[0], bank.feature_dim))
    if values.shape[0] == 0:
        return out
    x = _prepared(bank, values)
    if parallel:
        _features_parallel(x, *_args(bank), out)
    else:
        for i in range(x.shape[0]):
            _features_one(x[i], *_args(bank), out[i])
    return out


def transform_dataset(bank: KernelBank, dataset: Dataset, parallel: bool | None = None) -> FeatureMatrix:
    if dataset.n_channels != bank.n_channels:
        raise ShapeMismatch(f"dataset has {dataset.n_channels} channels, bank expects {bank.n_channels}")
    rows = transform_values(bank, dataset.values_array(), parallel) if len(dataset) else np.zeros((0, bank.feature_dim))
    return FeatureMatrix(rows, dataset.label_array(), bank.feature_dim)
