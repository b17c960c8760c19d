"""Channel selection and the end-to-end leakage analysis pipeline.

``run_analysis`` restricts a dataset to the selected channels, splits it,
extracts kernel features, fits PCA and the classifier on the training
split only, and scores the held-out split.  Test traces are touched only
after everything has been fitted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from . import _util
from .classify import ClassifierBackendSpec, close, fit_context, predict_labels
from .discovery import (
    ChannelDatabase,
    DiscoveryConfig,
    EventSpec,
    calibration_accuracy,
    lightweight_features,
    make_calibration_set,
)
from .errors import AdapterInvalidSubset, ChannelMissing, EmptyDatabase, InvalidConfig, NothingLeftAfterExclusion
from .pca import fit_pca, project, save_projection
from .rocket import FeatureMatrix, generate_kernels, normalize_rows, save_kernels, transform_dataset
from .synth import ScenarioConfig, generate_dataset
from .traces import Dataset, SplitSpec, dataset_to_text, split_dataset, split_indices

DEFAULT_K = 6
CORRELATION_PENALTY = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    L: int = 10_000
    d: int = 250
    split: SplitSpec = field(default_factory=SplitSpec)
    backend: ClassifierBackendSpec = field(default_factory=ClassifierBackendSpec)
    normalize_per_channel: bool = True
    seed: int = 0
    # "rocket" or "raw" (flattened values, the shift-sensitive baseline)
    features: str = "rocket"

    def __post_init__(self):
        if self.L < 1 or self.d < 1:
            raise InvalidConfig("L and d must be positive")
        if self.features not in ("rocket", "raw"):
            raise InvalidConfig(f"features must be rocket|raw, got {self.features!r}")

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "d": self.d,
            "split": {"ratio_alpha": self.split.ratio_alpha, "seed": self.split.seed},
            "backend": self.backend.to_dict(),
            "normalize_per_channel": self.normalize_per_channel,
            "seed": self.seed,
            "features": self.features,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        if "split" in data:
            data["split"] = SplitSpec(**data["split"])
        if "backend" in data:
            data["backend"] = ClassifierBackendSpec(**data["backend"])
        return cls(**data)


@dataclass
class AnalysisReport:
    event_id: str
    selected_channels: list[str]
    overall_accuracy: float
    per_class_accuracy: dict
    confusion_counts: list[list[int]]
    labels: list
    r_effective: int
    provenance: dict
    notice: str = ""

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "selected_channels": list(self.selected_channels),
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": [[str(k), v] for k, v in self.per_class_accuracy.items()],
            "labels": list(self.labels),
            "confusion_counts": self.confusion_counts,
            "r_effective": self.r_effective,
            "notice": self.notice,
            "provenance": self.provenance,
        }

    def table(self) -> str:
        lines = [
            f"event: {self.event_id or '-'}",
            f"channels: {', '.join(self.selected_channels)}",
            f"overall accuracy: {self.overall_accuracy:.4f}  (r_effective={self.r_effective})",
            f"{'class':<20} {'accuracy':>9}",
        ]
        lines += [f"{str(k):<20} {v:>9.4f}" for k, v in self.per_class_accuracy.items()]
        return "\n".join(lines)


def save_report(report: AnalysisReport, path: str | Path) -> None:
    _util.write_json(path, report.to_dict())


def dataset_fingerprint(dataset: Dataset) -> str:
    return hashlib.sha256(dataset_to_text(dataset).encode()).hexdigest()


def _raw_features(dataset: Dataset, normalize: bool) -> FeatureMatrix:
    values = dataset.values_array()
    if normalize and len(dataset):
        values = normalize_rows(values)
    rows = values.reshape(len(dataset), -1)
    width = dataset.n_channels * (dataset.n_samples if len(dataset) else 0)
    return FeatureMatrix(rows, dataset.label_array(), width)


def run_analysis(
    dataset: Dataset,
    selected: Sequence[str],
    config: PipelineConfig | None = None,
    event_id: str = "",
    save_kernels_to: str | Path | None = None,
    save_projection_to: str | Path | None = None,
) -> AnalysisReport:
    config = config or PipelineConfig()
    ds = dataset.select_channels(list(selected))
    train, test = split_dataset(ds, config.split)

    if config.features == "rocket":
        bank = generate_kernels(config.L, ds.n_channels, ds.n_samples, config.seed, config.normalize_per_channel)
        if save_kernels_to:
            save_kernels(bank, save_kernels_to)
        extract = lambda part: transform_dataset(bank, part)  # noqa: E731
    else:
        extract = lambda part: _raw_features(part, config.normalize_per_channel)  # noqa: E731

    train_f = extract(train)
    proj = fit_pca(train_f, config.d)
    if save_projection_to:
        save_projection(proj, save_projection_to)
    labels = [lab for lab in ds.labels if lab in set(train.label_array())]
    clf = fit_context(config.backend, project(proj, train_f), label_set=labels)
    try:
        # the held-out split is read only from here on
        test_r = project(proj, extract(test))
        predicted = predict_labels(clf, test_r)
    finally:
        close(clf)

    index = {lab: i for i, lab in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    for truth, guess in zip(test_r.labels, predicted):
        confusion[index[truth], index[guess]] += 1
    totals = confusion.sum(axis=1)
    per_class = {lab: (float(confusion[i, i] / totals[i]) if totals[i] else 0.0) for i, lab in enumerate(labels)}
    overall = float(np.trace(confusion) / confusion.sum())
    provenance = {
        "config": config.to_dict(),
        "dataset_sha256": dataset_fingerprint(dataset),
        "n_train": len(train),
        "n_test": len(test),
    }
    return AnalysisReport(
        event_id, list(selected), overall, per_class, confusion.tolist(), labels, proj.r_effective, provenance, proj.notice
    )


# -- channel selection --------------------------------------------------------


class SelectorAdapter(Protocol):
    def select(self, event: EventSpec, candidates: list[dict], k: int) -> list[str]: ...


def _corr_lookup(correlation, ids: list[str]):
    if isinstance(correlation, Mapping):
        return lambda a, b: abs(float(correlation.get(a, {}).get(b, correlation.get(b, {}).get(a, 0.0))))
    mat = np.asarray(correlation, dtype=float)
    if mat.shape != (len(ids), len(ids)):
        raise InvalidConfig(f"correlation matrix shape {mat.shape} does not match {len(ids)} verified channels")
    pos = {c: i for i, c in enumerate(ids)}
    return lambda a, b: abs(float(mat[pos[a], pos[b]]))


def select_channels(
    event: EventSpec | None,
    db: ChannelDatabase,
    k: int = DEFAULT_K,
    selector: SelectorAdapter | None = None,
    per_channel_acc: Mapping[str, float] | None = None,
    correlation=None,
    penalty: float = CORRELATION_PENALTY,
) -> list[str]:
    """Pick at most ``k`` verified channels, returned in database order.

    ``correlation`` is either a matrix aligned with the verified entries in
    database order or a nested mapping ``{a: {b: r}}``.
    """
    ids = db.verified_ids()
    if not ids:
        raise EmptyDatabase("no verified channels to select from")
    if selector is not None:
        candidates = [
            {"channel_id": e.channel_id, "api_name": e.api_name, "accuracy": (per_channel_acc or {}).get(e.channel_id)}
            for e in db.verified()
        ]
        chosen = list(selector.select(event, candidates, k))
        bad = [c for c in chosen if c not in ids]
        if bad or len(chosen) > k or len(set(chosen)) != len(chosen):
            raise AdapterInvalidSubset(f"selector returned an invalid subset {chosen} (k={k})")
        return [c for c in ids if c in set(chosen)]
    if k >= len(ids):
        return list(ids)
    per_channel_acc = per_channel_acc or {}
    missing = [c for c in ids if c not in per_channel_acc]
    if missing:
        raise InvalidConfig(f"per-channel accuracy missing for {missing}")
    corr = _corr_lookup(correlation if correlation is not None else {}, ids)
    chosen: list[str] = []
    while len(chosen) < k:
        best, best_score = None, -np.inf
        for c in ids:
            if c in chosen:
                continue
            redundancy = max((corr(c, s) for s in chosen), default=0.0)
            score = per_channel_acc[c] - penalty * redundancy
            if score > best_score:  # strict: ties keep the earlier entry
                best, best_score = c, score
        chosen.append(best)
    return [c for c in ids if c in set(chosen)]


def channel_statistics(
    calibration: Dataset, channel_ids: Sequence[str], config: DiscoveryConfig | None = None
) -> tuple[dict[str, float], np.ndarray]:
    """Calibration accuracy per channel and |correlation| between channels.

    Correlations use the gate's lightweight features mean-pooled per trace.
    """
    config = config or DiscoveryConfig()
    accs: dict[str, float] = {}
    pooled = []
    for c in channel_ids:
        feats = lightweight_features(calibration, c, config.ld_kernels, config.seed)
        accs[c] = calibration_accuracy(feats, config.ld_folds, config.seed)
        pooled.append(feats.rows.mean(axis=1))
    P = np.array(pooled)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.abs(np.corrcoef(P)) if len(P) > 1 else np.ones((len(P), len(P)))
    corr = np.nan_to_num(np.atleast_2d(corr), nan=0.0)
    return accs, corr


def select_for_dataset(
    dataset: Dataset,
    db: ChannelDatabase,
    config: PipelineConfig,
    event: EventSpec | None = None,
    k: int = DEFAULT_K,
    selector: SelectorAdapter | None = None,
    discovery_config: DiscoveryConfig | None = None,
) -> list[str]:
    """Selection driven by calibration statistics from the training split."""
    ids = db.verified_ids()
    if not ids:
        raise EmptyDatabase("no verified channels to select from")
    missing = [c for c in ids if c not in dataset.channel_ids]
    if missing:
        raise ChannelMissing(f"verified channels absent from dataset: {missing}")
    dconf = discovery_config or DiscoveryConfig(seed=config.seed)
    train_idx, _ = split_indices(dataset, config.split)
    calibration = make_calibration_set(dataset.subset(train_idx), dconf.calibration_per_class, config.seed)
    accs, corr = channel_statistics(calibration, ids, dconf)
    return select_channels(event, db, k, selector, accs, corr)


def run_exclusion_study(
    dataset: Dataset,
    db: ChannelDatabase,
    config: PipelineConfig | None = None,
    exclude_origin: str | None = None,
    event: EventSpec | None = None,
    k: int = DEFAULT_K,
    selector: SelectorAdapter | None = None,
) -> tuple[AnalysisReport, AnalysisReport]:
    config = config or PipelineConfig()
    event_id = event.event_id if event else ""
    report_all = run_analysis(dataset, select_for_dataset(dataset, db, config, event, k, selector), config, event_id)
    if exclude_origin is None:
        return report_all, report_all
    filtered_db = db.without_origin(exclude_origin)
    if not filtered_db.verified_ids():
        raise NothingLeftAfterExclusion(f"no verified channels left after excluding origin {exclude_origin!r}")
    selected = select_for_dataset(dataset, filtered_db, config, event, k, selector)
    return report_all, run_analysis(dataset, selected, config, event_id)


def sweep_dataset_size(
    scenario: ScenarioConfig,
    sizes: Sequence[int],
    config: PipelineConfig | None = None,
    channels: Sequence[str] | None = None,
) -> list[tuple[int, float]]:
    """Accuracy for each per-class trace count ``N``, ordered by ``N``.

    Smaller datasets are nested prefixes (per class) of the one generated
    at the scenario's capacity, so points differ only in data volume.
    """
    config = config or PipelineConfig()
    sizes = sorted(sizes)
    if not sizes or sizes[0] < 2 or sizes[-1] > scenario.traces_per_class:
        raise InvalidConfig(f"sizes must lie in [2, {scenario.traces_per_class}]")
    full = generate_dataset(scenario)
    selected = list(channels) if channels else full.channel_ids
    by_class = full.class_indices()
    rows = []
    for n in sizes:
        subset = full.subset(sorted(i for idx in by_class.values() for i in idx[:n]))
        rows.append((n, run_analysis(subset, selected, config).overall_accuracy))
    return rows


def emit_plot_data(points: Sequence[tuple], path: str | Path) -> None:
    """Whitespace-separated ``x y`` lines for external plotting."""
    _util.write_text(path, "".join(f"{x} {y!r}\n" for x, y in points))
