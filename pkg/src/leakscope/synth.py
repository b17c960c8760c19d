"""Synthetic event-conditioned traces standing in for device measurements.

Informative channels carry a deterministic per-class template (a Gaussian
burst, a level step, or a sinusoid) that is circularly shifted by a random
per-trace offset and buried in Gaussian noise.  Uninformative channels are
noise with the same distribution for every class.

Every random draw comes from a stream keyed by ``(seed, tag, index)`` so
that adding channels or traces leaves the existing ones untouched.
"""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _util
from .errors import InvalidConfig, ShiftOutOfRange
from .traces import ChannelSpec, Dataset, Trace

PATTERNS = ("burst", "step", "periodic")


@dataclass(frozen=True)
class SyntheticChannelConfig:
    channel_id: str
    informativeness: str = "informative"
    pattern_kind: str = "burst"
    noise_std: float = 0.3
    # channels sharing a group share class templates (redundant signals)
    template_group: str | None = None
    unit: str = ""

    def __post_init__(self):
        if self.informativeness not in ("informative", "uninformative"):
            raise InvalidConfig(f"informativeness must be informative|uninformative, got {self.informativeness!r}")
        if self.pattern_kind not in PATTERNS:
            raise InvalidConfig(f"pattern_kind must be one of {PATTERNS}, got {self.pattern_kind!r}")
        if not self.noise_std >= 0:
            raise InvalidConfig("noise_std must be non-negative")

    @property
    def informative(self) -> bool:
        return self.informativeness == "informative"


@dataclass(frozen=True)
class ScenarioConfig:
    n_classes: int
    traces_per_class: int
    n_samples: int
    channels: tuple[SyntheticChannelConfig, ...]
    sample_rate_hz: float = 100.0
    max_shift_fraction: float = 0.0
    seed: int = 0
    identical_classes: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.n_classes < 2:
            raise InvalidConfig("n_classes must be >= 2")
        if self.traces_per_class < 2:
            raise InvalidConfig("traces_per_class must be >= 2")
        if self.n_samples < 2:
            raise InvalidConfig("n_samples must be >= 2")
        if not self.channels:
            raise InvalidConfig("at least one channel must be configured")
        if not self.sample_rate_hz > 0:
            raise InvalidConfig("sample_rate_hz must be positive")
        if not 0 <= self.max_shift_fraction < 1:
            raise InvalidConfig("max_shift_fraction must lie in [0, 1)")
        ids = [c.channel_id for c in self.channels]
        if len(set(ids)) != len(ids):
            raise InvalidConfig(f"duplicate channel ids: {ids}")

    @property
    def labels(self) -> list[str]:
        return [f"class_{k}" for k in range(self.n_classes)]

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = [asdict(c) for c in self.channels]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        try:
            data["channels"] = [SyntheticChannelConfig(**c) for c in data.get("channels", [])]
            return cls(**data)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    data = _util.read_json(path)
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: scenario must be an object")
    return ScenarioConfig.from_dict(data)


def _grid_cycles(n_classes: int, n_samples: int) -> np.ndarray:
    # integer cycle counts keep the sinusoid continuous under circular shifts
    step = 2 if 1 + 2 * n_classes <= n_samples // 4 else 1
    return 1 + step * np.arange(n_classes)


def class_templates(config: ScenarioConfig, channel: SyntheticChannelConfig) -> np.ndarray:
    """Noise-free template per class, shape (n_classes, n_samples)."""
    K, n = config.n_classes, config.n_samples
    key = channel.template_group or channel.channel_id
    rng = _util.derive_rng(config.seed, f"template/{key}")
    t = np.arange(n, dtype=np.float64)
    out = np.zeros((K, n))
    kind = channel.pattern_kind
    if kind == "burst":
        widths = np.linspace(0.015, 0.1, K)[rng.permutation(K)] * n
        centers = rng.uniform(0.2, 0.8, K) * n
        for k in range(K):
            out[k] = np.exp(-0.5 * ((t - centers[k]) / max(widths[k], 0.5)) ** 2)
    elif kind == "step":
        times = np.linspace(0.15, 0.85, K)[rng.permutation(K)] * n
        levels = np.linspace(0.5, 1.5, K)[rng.permutation(K)]
        for k in range(K):
            out[k] = np.where(t >= times[k], levels[k], 0.0)
    else:
        cycles = _grid_cycles(K, n)[rng.permutation(K)]
        phase = rng.uniform(0, 2 * np.pi)
        for k in range(K):
            out[k] = np.sin(2 * np.pi * cycles[k] * t / n + phase)
    if config.identical_classes:
        out[:] = out[0]
    return out


def generate_dataset(config: ScenarioConfig) -> Dataset:
    K, N, n = config.n_classes, config.traces_per_class, config.n_samples
    max_shift = int(np.floor(config.max_shift_fraction * n))
    templates = [class_templates(config, ch) if ch.informative else None for ch in config.channels]
    labels = config.labels
    traces = []
    for k in range(K):
        for j in range(N):
            idx = k * N + j
            shift = int(_util.derive_rng(config.seed, "shift", idx).integers(0, max_shift + 1))
            rows = np.empty((len(config.channels), n))
            for c, ch in enumerate(config.channels):
                noise = _util.derive_rng(config.seed, f"noise/{ch.channel_id}", idx).standard_normal(n)
                base = np.roll(templates[c][k], shift) if ch.informative else 0.0
                rows[c] = base + ch.noise_std * noise
            traces.append(Trace(rows, config.sample_rate_hz, labels[k]))
    channels = [ChannelSpec(ch.channel_id, ch.channel_id, ch.unit) for ch in config.channels]
    return Dataset(channels, labels, traces, config.sample_rate_hz)


def apply_time_shift(trace: Trace, shift_samples: int) -> Trace:
    """Rotate every channel row right by ``shift_samples``."""
    if not 0 <= shift_samples < trace.n_samples:
        raise ShiftOutOfRange(f"shift {shift_samples} outside [0, {trace.n_samples})")
    return trace.with_values(np.roll(trace.values, shift_samples, axis=1))


def standard_scenario(
    n_classes: int = 6,
    traces_per_class: int = 50,
    n_informative: int = 4,
    n_uninformative: int = 0,
    noise_std: float = 0.3,
    max_shift_fraction: float = 0.2,
    n_samples: int = 100,
    seed: int = 0,
) -> ScenarioConfig:
    """The desk-scale benchmark scenario used throughout the tests and demos."""
    channels = [
        SyntheticChannelConfig(f"inf_{i}", "informative", PATTERNS[i % 3], noise_std)
        for i in range(n_informative)
    ]
    channels += [
        SyntheticChannelConfig(f"noise_{i}", "uninformative", "burst", noise_std) for i in range(n_uninformative)
    ]
    return ScenarioConfig(
        n_classes=n_classes,
        traces_per_class=traces_per_class,
        n_samples=n_samples,
        channels=channels,
        sample_rate_hz=100.0,
        max_shift_fraction=max_shift_fraction,
        seed=seed,
    )


def redundant_scenario(
    n_groups: int = 4,
    n_classes: int = 6,
    traces_per_class: int = 30,
    n_samples: int = 100,
    seed: int = 0,
) -> ScenarioConfig:
    """Pairs of channels carrying the same class templates.

    Group ``g`` yields ``seed_g`` and ``disc_g`` (shared templates,
    independent noise, the second one noisier); one uninformative channel
    is added on each side.  Ids are prefixed so callers can assign origins
    by prefix.
    """
    channels = []
    for g in range(n_groups):
        kind = PATTERNS[g % 3]
        channels.append(SyntheticChannelConfig(f"seed_{g}", "informative", kind, 0.4, template_group=f"group_{g}"))
        channels.append(SyntheticChannelConfig(f"disc_{g}", "informative", kind, 0.6, template_group=f"group_{g}"))
    channels.append(SyntheticChannelConfig("seed_idle", "uninformative"))
    channels.append(SyntheticChannelConfig("disc_idle", "uninformative"))
    return ScenarioConfig(n_classes, traces_per_class, n_samples, channels, 100.0, 0.2, seed)
