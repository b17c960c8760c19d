"""Traces, datasets, deterministic splits and the ``.traces.jsonl`` format.

A dataset file is line-delimited JSON. Line 1 is the header::

    {"version":1,"sample_rate_hz":100.0,"channels":[{"channel_id":...,
     "display_name":...,"unit":...}],"labels":[...]}

and every following line is one trace::

    {"label":...,"values":[[ch0 samples...],[ch1 samples...]]}
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from . import _util
from .errors import (
    ChannelMissing,
    ClassTooSmall,
    DataError,
    MalformedHeader,
    NonFiniteValue,
    SchemaMismatch,
    VersionUnsupported,
)

FORMAT_VERSION = 1
_CHANNEL_ID = re.compile(r"[a-z0-9_]+")

Label = Hashable


@dataclass(frozen=True)
class ChannelSpec:
    channel_id: str
    display_name: str = ""
    unit: str = ""

    def __post_init__(self):
        if not isinstance(self.channel_id, str) or not _CHANNEL_ID.fullmatch(self.channel_id):
            raise DataError(f"channel_id {self.channel_id!r} must match [a-z0-9_]+")
        if not self.display_name:
            object.__setattr__(self, "display_name", self.channel_id)

    def to_dict(self) -> dict:
        return {"channel_id": self.channel_id, "display_name": self.display_name, "unit": self.unit}


@dataclass(frozen=True, eq=False)
class Trace:
    """One labeled multivariate recording, ``values`` shaped (channels, samples).

    Non-finite values are tolerated here so that :func:`validate_trace` can
    report them; :class:`Dataset` refuses them.
    """

    values: np.ndarray
    sample_rate_hz: float
    label: Label

    def __post_init__(self):
        try:
            arr = np.array(self.values, dtype=np.float64)
        except ValueError as exc:
            raise SchemaMismatch("unequal sample counts across channel rows") from exc
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise SchemaMismatch(f"trace values must be 2-D, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if not self.sample_rate_hz > 0:
            raise DataError("sample_rate_hz must be positive")
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "Trace":
        return Trace(values, self.sample_rate_hz, self.label)


def validate_trace(trace, channels: Sequence[ChannelSpec]) -> list[str]:
    """List every invariant the trace violates; empty means valid.

    ``trace`` may be a :class:`Trace` or a raw ``{"label", "values"}``
    record (or bare nested rows), which allows ragged input to be reported
    instead of raising.
    """
    if isinstance(trace, Trace):
        rows = list(trace.values)
    elif isinstance(trace, dict):
        rows = trace.get("values")
    else:
        rows = trace
    problems: list[str] = []
    if not isinstance(rows, (list, tuple)) or not all(isinstance(r, (list, tuple, np.ndarray)) for r in rows):
        return ["values must be a list of channel rows"]
    if len(rows) != len(channels):
        problems.append(f"channel count {len(rows)} != expected {len(channels)}")
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        problems.append(f"unequal sample counts: {sorted(lengths)}")
    if lengths and min(lengths) < 2:
        problems.append("fewer than 2 samples")
    for c, row in enumerate(rows):
        name = channels[c].channel_id if c < len(channels) else f"#{c}"
        for i, v in enumerate(row):
            try:
                fv = float(v)
            except (TypeError, ValueError):
                problems.append(f"non-numeric value at channel {name} sample {i}")
                continue
            if not math.isfinite(fv):
                problems.append(f"non-finite value at channel {name} sample {i}")
    return problems


@dataclass(frozen=True, eq=False)
class Dataset:
    channels: tuple[ChannelSpec, ...]
    labels: tuple
    traces: tuple[Trace, ...] = ()
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        if not self.sample_rate_hz > 0:
            raise DataError("sample_rate_hz must be positive")
        ids = [c.channel_id for c in self.channels]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate channel ids in {ids}")
        if len(set(self.labels)) != len(self.labels):
            raise DataError("duplicate class labels")
        known = set(self.labels)
        for i, tr in enumerate(self.traces):
            if tr.label not in known:
                raise SchemaMismatch(f"trace {i}: label {tr.label!r} not in label list")
            if tr.n_channels != len(self.channels):
                raise SchemaMismatch(
                    f"trace {i}: {tr.n_channels} channel rows under a {len(self.channels)}-channel header"
                )
            if tr.sample_rate_hz != self.sample_rate_hz:
                raise SchemaMismatch(f"trace {i}: sample rate differs from dataset")
            if tr.n_samples < 2:
                raise SchemaMismatch(f"trace {i}: fewer than 2 samples")
            if not np.isfinite(tr.values).all():
                c, s = np.argwhere(~np.isfinite(tr.values))[0]
                raise NonFiniteValue(f"trace {i}: non-finite value at channel {ids[c]} sample {s}")
        if self.traces and len({t.n_samples for t in self.traces}) > 1:
            raise SchemaMismatch("traces have different lengths")

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def channel_ids(self) -> list[str]:
        return [c.channel_id for c in self.channels]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_samples(self) -> int:
        if not self.traces:
            raise DataError("empty dataset has no sample count")
        return self.traces[0].n_samples

    def label_array(self) -> list:
        return [t.label for t in self.traces]

    def class_indices(self) -> dict:
        """Map each label (in label-list order) to its trace positions."""
        out: dict = {lab: [] for lab in self.labels}
        for i, t in enumerate(self.traces):
            out[t.label].append(i)
        return out

    def values_array(self) -> np.ndarray:
        """All trace values stacked as (n_traces, n_channels, n_samples)."""
        if not self.traces:
            return np.zeros((0, self.n_channels, 0))
        return np.stack([t.values for t in self.traces])

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.channels, self.labels, [self.traces[i] for i in indices], self.sample_rate_hz)

    def with_traces(self, traces: Iterable[Trace]) -> "Dataset":
        return Dataset(self.channels, self.labels, traces, self.sample_rate_hz)

    def select_channels(self, channel_ids: Sequence[str]) -> "Dataset":
        pos = {c: i for i, c in enumerate(self.channel_ids)}
        missing = [c for c in channel_ids if c not in pos]
        if missing:
            raise ChannelMissing(f"channels not in dataset: {missing}")
        rows = [pos[c] for c in channel_ids]
        return Dataset(
            [self.channels[r] for r in rows],
            self.labels,
            [t.with_values(t.values[rows]) for t in self.traces],
            self.sample_rate_hz,
        )


def datasets_identical(a: Dataset, b: Dataset) -> bool:
    """Structural equality with float values compared bit-for-bit."""
    if (a.channels, a.labels, a.sample_rate_hz, len(a)) != (b.channels, b.labels, b.sample_rate_hz, len(b)):
        return False
    for ta, tb in zip(a.traces, b.traces):
        if ta.label != tb.label or ta.values.shape != tb.values.shape:
            return False
        if ta.values.tobytes() != tb.values.tobytes():
            return False
    return True


# -- splitting ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    ratio_alpha: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.ratio_alpha < 1:
            raise DataError(f"split ratio must lie in (0, 1), got {self.ratio_alpha}")


def train_count(m: int, alpha: float) -> int:
    # the epsilon absorbs products such as 0.57 * 100 = 56.99999999999999
    return max(1, math.floor(alpha * m + 1e-9))


def split_indices(dataset: Dataset, split: SplitSpec) -> tuple[list[int], list[int]]:
    train: list[int] = []
    for k, (label, idx) in enumerate(dataset.class_indices().items()):
        if not idx:
            continue
        if len(idx) < 2:
            raise ClassTooSmall(f"class {label!r} has {len(idx)} trace(s); at least 2 required")
        order = _util.derive_rng(split.seed, "split", k).permutation(len(idx))
        n_train = train_count(len(idx), split.ratio_alpha)
        train.extend(idx[j] for j in order[:n_train])
    train.sort()
    chosen = set(train)
    test = [i for i in range(len(dataset)) if i not in chosen]
    return train, test


def split_dataset(dataset: Dataset, split: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified train/test partition; both halves keep dataset order."""
    train, test = split_indices(dataset, split)
    return dataset.subset(train), dataset.subset(test)


# -- file format -------------------------------------------------------------


def _header(dataset: Dataset) -> dict:
    return {
        "version": FORMAT_VERSION,
        "sample_rate_hz": dataset.sample_rate_hz,
        "channels": [c.to_dict() for c in dataset.channels],
        "labels": list(dataset.labels),
    }


def dataset_to_text(dataset: Dataset) -> str:
    for i, t in enumerate(dataset.traces):
        if not np.isfinite(t.values).all():
            raise NonFiniteValue(f"trace {i} contains NaN or infinite values")
    lines = [_util.dumps(_header(dataset))]
    lines.extend(_util.dumps({"label": t.label, "values": t.values.tolist()}) for t in dataset.traces)
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    _util.write_text(path, dataset_to_text(dataset))


def _reject_constant(name):
    raise NonFiniteValue(f"non-finite literal {name}")


def parse_header(line: str) -> dict:
    try:
        header = json.loads(line, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or "version" not in header:
        raise MalformedHeader("header record lacks the 'version' field")
    if not isinstance(header["version"], int):
        raise MalformedHeader("header 'version' must be an integer")
    if header["version"] > FORMAT_VERSION:
        raise VersionUnsupported(f"dataset version {header['version']} > supported {FORMAT_VERSION}")
    for key in ("sample_rate_hz", "channels", "labels"):
        if key not in header:
            raise MalformedHeader(f"header record lacks the {key!r} field")
    return header


def load_dataset(path: str | Path) -> Dataset:
    text = _util.read_text(path)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeader(f"{path}: empty file")
    header = parse_header(lines[0])
    try:
        channels = [ChannelSpec(**c) for c in header["channels"]]
    except (TypeError, DataError) as exc:
        raise MalformedHeader(f"bad channel list: {exc}") from exc
    labels = header["labels"]
    if not isinstance(labels, list):
        raise MalformedHeader("'labels' must be a list")
    rate = header["sample_rate_hz"]
    traces = []
    for i, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line, parse_constant=_reject_constant)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"trace {i}: invalid JSON ({exc})") from exc
        if not isinstance(rec, dict) or "label" not in rec or "values" not in rec:
            raise SchemaMismatch(f"trace {i}: record needs 'label' and 'values'")
        problems = validate_trace(rec, channels)
        if problems:
            kind = NonFiniteValue if all("non-finite" in p for p in problems) else SchemaMismatch
            raise kind(f"trace {i}: " + "; ".join(problems))
        traces.append(Trace(rec["values"], rate, rec["label"]))
    return Dataset(channels, labels, traces, rate)
