"""Interface-level countermeasures and a harness measuring their effect.

``reduce_frequency`` emulates a capped refresh rate by sample-and-hold at
the original query rate.  ``add_gaussian_noise`` perturbs values with a
standard deviation expressed in units of each channel's clean training
standard deviation.  Both keep trace shape, rate and label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _util
from .analysis import PipelineConfig, run_analysis
from .errors import InvalidConfig
from .traces import Dataset, Trace, split_indices

KINDS = ("frequency_cap", "gaussian_noise")


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    cap_hz: float | None = None
    sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "frequency_cap":
            if self.cap_hz is None or not self.cap_hz > 0 or self.sigma is not None:
                raise InvalidConfig("frequency_cap needs a positive cap_hz and no sigma")
        elif self.kind == "gaussian_noise":
            if self.sigma is None or not self.sigma >= 0 or self.cap_hz is not None:
                raise InvalidConfig("gaussian_noise needs a non-negative sigma and no cap_hz")
        else:
            raise InvalidConfig(f"defense kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "frequency_cap":
            return f"frequency_cap:{self.cap_hz:g}Hz"
        return f"gaussian_noise:sigma={self.sigma:g}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cap_hz": self.cap_hz, "sigma": self.sigma, "seed": self.seed}


def hold_period(sample_rate_hz: float, cap_hz: float) -> int:
    return max(1, int(round(sample_rate_hz / cap_hz)))


def reduce_frequency(trace: Trace, cap_hz: float) -> Trace:
    h = hold_period(trace.sample_rate_hz, cap_hz)
    if h == 1:
        return trace
    held = np.arange(trace.n_samples) // h * h
    return trace.with_values(trace.values[:, held])


def channel_stds(train: Dataset) -> np.ndarray:
    """Per-channel standard deviation pooled over all clean training samples."""
    values = train.values_array()
    return values.transpose(1, 0, 2).reshape(train.n_channels, -1).std(axis=1)


def add_gaussian_noise(
    train_stats: np.ndarray | Sequence[float],
    trace: Trace,
    sigma: float,
    seed: int,
    trace_index: int = 0,
) -> Trace:
    """Each value gets an independent N(0, (sigma * channel_std)^2) draw.

    Draws depend only on ``(seed, trace_index)`` and the position inside
    the trace, never on evaluation order.
    """
    if sigma == 0:
        return trace
    std = np.asarray(train_stats, dtype=np.float64).reshape(-1, 1)
    noise = _util.derive_rng(seed, "defense-noise", trace_index).standard_normal(trace.values.shape)
    return trace.with_values(trace.values + sigma * std * noise)


def apply_defense(dataset: Dataset, defense: DefenseSpec, train_stats: np.ndarray | None = None) -> Dataset:
    """Apply one transform identically to every trace of the dataset."""
    if defense.kind == "frequency_cap":
        return dataset.with_traces(reduce_frequency(t, defense.cap_hz) for t in dataset.traces)
    if train_stats is None:
        raise InvalidConfig("gaussian_noise needs clean training statistics")
    return dataset.with_traces(
        add_gaussian_noise(train_stats, t, defense.sigma, defense.seed, i) for i, t in enumerate(dataset.traces)
    )


def evaluate_defense(
    dataset: Dataset,
    defenses: Sequence[DefenseSpec],
    config: PipelineConfig | None = None,
    channels: Sequence[str] | None = None,
) -> list[tuple[str, float]]:
    """Clean baseline row followed by one row per defense, same pipeline seed."""
    config = config or PipelineConfig()
    selected = list(channels) if channels else dataset.channel_ids
    ds = dataset.select_channels(selected)
    train_idx, _ = split_indices(ds, config.split)
    stats = channel_stds(ds.subset(train_idx))
    rows = [("clean", run_analysis(ds, selected, config).overall_accuracy)]
    for spec in defenses:
        rows.append((spec.name, run_analysis(apply_defense(ds, spec, stats), selected, config).overall_accuracy))
    return rows
