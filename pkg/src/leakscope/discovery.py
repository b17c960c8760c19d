"""Batch propose-verify discovery of side channels.

Every proposal runs through four gates in a fixed order (semantic,
threat model, duplication, distinguishability); the first failing gate
names the rejection reason.  Accepted channels join the database between
batches and the loop halts once a batch's acceptance rate drops below
``tau_stop`` or the batch budget is spent.
"""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import _util
from .classify import ClassifierBackendSpec, accuracy, fit_context
from .errors import AdapterError, ChannelMissingFromCalibration, DataError, MalformedHeader, VersionUnsupported
from .rocket import FeatureMatrix, generate_kernels, transform_values
from .traces import Dataset, load_dataset

logger = logging.getLogger(__name__)

REASONS = ("BER", "SE", "LD", "CD")
# documentation inconsistency; not one of the four measured failure classes
SEMANTIC = "SEM"
PROBE_KINDS = ("passive", "active")
SCOPES = ("within_sandbox", "cross_sandbox", "privileged")
STATUSES = ("proposed", "verified", "rejected")
ORIGINS = ("seed", "discovered")


@dataclass(frozen=True)
class ChannelDescriptor:
    channel_id: str
    api_name: str
    signal_description: str = ""
    probe_kind: str = "passive"
    requires_user_permission: bool = False
    available_in_background: bool = True
    sandbox_scope: str = "within_sandbox"
    status: str = "proposed"
    rejection_reason: str | None = None
    measured_accuracy: float | None = None

    def __post_init__(self):
        if not self.channel_id or not isinstance(self.channel_id, str):
            raise DataError("descriptor needs a channel_id")
        if self.probe_kind not in PROBE_KINDS:
            raise DataError(f"probe_kind must be one of {PROBE_KINDS}, got {self.probe_kind!r}")
        if self.sandbox_scope not in SCOPES:
            raise DataError(f"sandbox_scope must be one of {SCOPES}, got {self.sandbox_scope!r}")
        if self.status not in STATUSES:
            raise DataError(f"status must be one of {STATUSES}")
        if (self.status == "rejected") != (self.rejection_reason is not None):
            raise DataError("rejection_reason must be set exactly when status is rejected")
        if self.rejection_reason is not None and self.rejection_reason not in REASONS + (SEMANTIC,):
            raise DataError(f"unknown rejection reason {self.rejection_reason!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelDescriptor":
        if not isinstance(data, dict):
            raise DataError(f"descriptor must be an object, got {type(data).__name__}")
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise DataError(f"unknown descriptor fields {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise DataError(str(exc)) from exc

    def accepted(self, acc: float) -> "ChannelDescriptor":
        return dataclasses.replace(self, status="verified", rejection_reason=None, measured_accuracy=acc)

    def rejected(self, reason: str, acc: float | None = None) -> "ChannelDescriptor":
        return dataclasses.replace(self, status="rejected", rejection_reason=reason, measured_accuracy=acc)


@dataclass
class ChannelDatabase:
    """Ordered channel entries, each tagged ``seed`` or ``discovered``."""

    entries: list[ChannelDescriptor] = field(default_factory=list)
    origins: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.entries) != len(self.origins):
            raise DataError("entries and origins differ in length")
        ids = [e.channel_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate channel_id in database")

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, desc: ChannelDescriptor, origin: str) -> None:
        if origin not in ORIGINS:
            raise DataError(f"origin must be one of {ORIGINS}")
        if any(e.channel_id == desc.channel_id for e in self.entries):
            raise DataError(f"channel_id {desc.channel_id!r} already in database")
        self.entries.append(desc)
        self.origins.append(origin)

    def copy(self) -> "ChannelDatabase":
        return ChannelDatabase(list(self.entries), list(self.origins))

    def verified(self) -> list[ChannelDescriptor]:
        return [e for e in self.entries if e.status == "verified"]

    def verified_ids(self) -> list[str]:
        return [e.channel_id for e in self.verified()]

    def origin_of(self, channel_id: str) -> str:
        for e, o in zip(self.entries, self.origins):
            if e.channel_id == channel_id:
                return o
        raise KeyError(channel_id)

    def without_origin(self, origin: str) -> "ChannelDatabase":
        keep = [(e, o) for e, o in zip(self.entries, self.origins) if o != origin]
        return ChannelDatabase([e for e, _ in keep], [o for _, o in keep])

    def summary(self) -> str:
        return "\n".join(
            f"- {e.channel_id} ({e.api_name}, {e.probe_kind}, {o})"
            for e, o in zip(self.entries, self.origins)
            if e.status == "verified"
        )

    @classmethod
    def from_seed(cls, descriptors: Iterable[ChannelDescriptor]) -> "ChannelDatabase":
        descs = [d if d.status == "verified" else dataclasses.replace(d, status="verified", rejection_reason=None) for d in descriptors]
        return cls(descs, ["seed"] * len(descs))


def save_database(db: ChannelDatabase, path: str | Path) -> None:
    records = [{"version": 1, "kind": "channel_database", "n_entries": len(db)}]
    records += [{"origin": o, "descriptor": e.to_dict()} for e, o in zip(db.entries, db.origins)]
    _util.write_jsonl(path, records)


def load_database(path: str | Path) -> ChannelDatabase:
    import json

    lines = [ln for ln in _util.read_text(path).splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeader(f"{path}: empty database file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(header, dict) or "version" not in header:
        raise MalformedHeader(f"{path}: database header lacks 'version'")
    if header["version"] > 1:
        raise VersionUnsupported(f"database version {header['version']} unsupported")
    db = ChannelDatabase()
    for rec in records:
        db.add(ChannelDescriptor.from_dict(rec["descriptor"]), rec.get("origin", "discovered"))
    return db


@dataclass(frozen=True)
class EventSpec:
    event_id: str
    n_classes: int
    description: str = ""
    calibration_dataset_path: str | None = None

    def __post_init__(self):
        if self.n_classes < 2:
            raise DataError("an event needs at least 2 classes")

    @property
    def random_accuracy(self) -> float:
        return 1.0 / self.n_classes


def _norm(name: str) -> str:
    return " ".join(name.split())


@dataclass
class KnowledgeBase:
    documented_apis: set[str] = field(default_factory=set)
    feasibility_notes: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        self.documented_apis = {_norm(a) for a in self.documented_apis}
        self.feasibility_notes = {_norm(k): dict(v) for k, v in self.feasibility_notes.items()}

    def documents(self, api_name: str) -> bool:
        return _norm(api_name) in self.documented_apis

    def note(self, api_name: str) -> dict:
        return self.feasibility_notes.get(_norm(api_name), {})

    def to_dict(self) -> dict:
        return {"documented_apis": sorted(self.documented_apis), "feasibility_notes": dict(sorted(self.feasibility_notes.items()))}

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeBase":
        return cls(set(data.get("documented_apis", [])), data.get("feasibility_notes", {}))


def load_event(path: str | Path) -> EventSpec:
    data = _util.read_json(path)
    try:
        return EventSpec(**data)
    except TypeError as exc:
        raise DataError(f"{path}: {exc}") from exc


def load_kb(path: str | Path) -> KnowledgeBase:
    return KnowledgeBase.from_dict(_util.read_json(path))


@dataclass
class DiscoveryConfig:
    batch_size_B: int = 10
    tau_dist: float = 2.0
    tau_stop: float = 0.2
    max_batches: int = 20
    ld_kernels: int = 500
    ld_folds: int = 5
    calibration_per_class: int = 10
    jaccard_threshold: float = 0.8
    dedup_exact_api_kind: bool = True
    adapter_retries: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size_B < 1 or self.max_batches < 1:
            raise DataError("batch size and budget must be positive")
        if not self.tau_dist > 1:
            raise DataError("tau_dist must exceed 1")
        if not 0 < self.tau_stop < 1:
            raise DataError("tau_stop must lie in (0, 1)")


@dataclass
class FeedbackLedger:
    rejected: list[tuple[ChannelDescriptor, str, int]] = field(default_factory=list)
    batch_stats: list[tuple[int, float]] = field(default_factory=list)

    def tallies(self) -> dict[str, int]:
        counts = {r: 0 for r in REASONS + (SEMANTIC,)}
        for _, reason, _ in self.rejected:
            counts[reason] += 1
        return counts


@dataclass
class DiscoveryLog:
    events: list[dict] = field(default_factory=list)
    stop_reason: str = ""

    def record(self, **event) -> None:
        self.events.append(event)
        logger.debug("discovery: %s", event)


# -- checks ------------------------------------------------------------------


def check_semantic(desc: ChannelDescriptor, kb: KnowledgeBase, verifier: "VerifierAdapter | None" = None) -> str:
    if not kb.documents(desc.api_name):
        return "fail"
    if verifier is not None and not verifier.verify(desc, kb):
        return "fail"
    return "pass"


def check_feasibility(desc: ChannelDescriptor, kb: KnowledgeBase) -> str:
    """Threat-model gate; knowledge-base notes override self-claims."""
    note = kb.note(desc.api_name)
    background = note.get("available_in_background", desc.available_in_background)
    scope = note.get("sandbox_scope", desc.sandbox_scope)
    permission = note.get("requires_user_permission", desc.requires_user_permission)
    if not background:
        return "BER"
    if scope != "within_sandbox" or permission:
        return "SE"
    return "pass"


def canonical_tokens(desc: ChannelDescriptor) -> set[str]:
    return {desc.api_name.lower(), desc.probe_kind} | set(re.findall(r"[a-z0-9]+", desc.signal_description.lower()))


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def check_duplicate(desc: ChannelDescriptor, db: ChannelDatabase, threshold: float = 0.8, exact_api_kind: bool = True) -> str:
    tokens = canonical_tokens(desc)
    for other in db.verified():
        if exact_api_kind and other.api_name.lower() == desc.api_name.lower() and other.probe_kind == desc.probe_kind:
            return "CD"
        if jaccard(tokens, canonical_tokens(other)) >= threshold:
            return "CD"
    return "pass"


def lightweight_features(calibration: Dataset, channel_id: str, n_kernels: int = 500, seed: int = 0) -> FeatureMatrix:
    """Single-channel kernel features used by the distinguishability gate."""
    if channel_id not in calibration.channel_ids:
        raise ChannelMissingFromCalibration(f"channel {channel_id!r} absent from calibration data")
    c = calibration.channel_ids.index(channel_id)
    values = calibration.values_array()[:, c : c + 1, :]
    bank = generate_kernels(n_kernels, 1, calibration.n_samples, seed)
    return FeatureMatrix(transform_values(bank, values), calibration.label_array(), bank.feature_dim)


def fold_assignment(labels: Sequence, n_folds: int, seed: int) -> np.ndarray:
    """Stratified fold id per row; every class is spread over all folds."""
    folds = np.empty(len(labels), dtype=int)
    by_class: dict = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    for k, idx in enumerate(by_class.values()):
        order = _util.derive_rng(seed, "ld-folds", k).permutation(len(idx))
        for pos, j in enumerate(order):
            folds[idx[j]] = pos % n_folds
    return folds


def calibration_accuracy(features: FeatureMatrix, n_folds: int = 5, seed: int = 0) -> float:
    """Nearest-centroid accuracy pooled over rotating 80/20 sub-splits."""
    counts = {}
    for lab in features.labels:
        counts[lab] = counts.get(lab, 0) + 1
    if min(counts.values()) < 2:
        raise DataError("calibration data needs at least 2 traces per class")
    n_folds = min(n_folds, min(counts.values()))
    folds = fold_assignment(features.labels, n_folds, seed)
    spec = ClassifierBackendSpec("nearest_centroid")
    correct = 0
    for f in range(n_folds):
        train = np.flatnonzero(folds != f)
        test = np.flatnonzero(folds == f)
        clf = fit_context(spec, features.subset(train), label_set=list(counts))
        correct += accuracy(clf, features.subset(test)) * len(test)
    return correct / len(features)


def check_distinguishability(
    desc: ChannelDescriptor,
    event: EventSpec,
    calibration: Dataset,
    config: DiscoveryConfig | None = None,
) -> tuple[float, str]:
    config = config or DiscoveryConfig()
    feats = lightweight_features(calibration, desc.channel_id, config.ld_kernels, config.seed)
    acc = calibration_accuracy(feats, config.ld_folds, config.seed)
    return acc, distinguishability_verdict(acc, event.n_classes, config.tau_dist)


def distinguishability_verdict(acc: float, n_classes: int, tau_dist: float) -> str:
    return "pass" if acc >= tau_dist * (1.0 / n_classes) else "LD"


def summarize_feedback(ledger: FeedbackLedger, batch: int | None = None) -> str:
    """Digest of rejections grouped by reason, in the fixed order BER, SE, LD, CD.

    Documentation failures are appended as a fifth line only when present.
    """
    rows = [(d, r) for d, r, b in ledger.rejected if batch is None or b == batch]
    if not rows:
        return ""
    lines = []
    for reason in REASONS + (SEMANTIC,):
        apis = [d.api_name for d, r in rows if r == reason]
        if reason == SEMANTIC and not apis:
            continue
        examples = ", ".join(list(dict.fromkeys(apis))[:3])
        lines.append(f"{reason}: {len(apis)}" + (f" (e.g. {examples})" if examples else ""))
    return "\n".join(lines)


# -- adapters ----------------------------------------------------------------


@dataclass(frozen=True)
class ProposalRequest:
    event: EventSpec
    batch_size: int
    db_summary: str
    feedback: str
    prompt: str = ""


class ProposerAdapter(Protocol):
    def propose(self, request: ProposalRequest) -> list[ChannelDescriptor]: ...


class VerifierAdapter(Protocol):
    def verify(self, desc: ChannelDescriptor, kb: KnowledgeBase) -> bool: ...


def default_prompt(event: EventSpec) -> str:
    from importlib.resources import files

    template = files("leakscope").joinpath("data/prompts/proposer.txt").read_text(encoding="utf-8")
    return template.format(event_id=event.event_id, n_classes=event.n_classes, description=event.description)


@dataclass
class DiscoveryResult:
    database: ChannelDatabase
    ledger: FeedbackLedger
    log: DiscoveryLog

    def __iter__(self):
        return iter((self.database, self.ledger, self.log))

    def report(self) -> dict:
        tallies = self.ledger.tallies()
        discovered = [e for e, o in zip(self.database.entries, self.database.origins) if o == "discovered"]
        return {
            "tallies": tallies,
            "accepted": len(discovered),
            "total_proposals": len(discovered) + sum(tallies.values()),
            "batches": [{"batch": b, "acceptance_rate": rho} for b, rho in self.ledger.batch_stats],
            "stop_reason": self.log.stop_reason,
            "discovered": [e.channel_id for e in discovered],
        }


def _verify_batch(proposals, event, kb, db, verifier, calibration, config, batch, log):
    accepted, rejected = [], []
    # entries accepted earlier in the same batch count for duplicate checks
    seen = db.copy()
    for desc in proposals:
        reason, acc = None, None
        if check_semantic(desc, kb, verifier) != "pass":
            reason = SEMANTIC
        elif (v := check_feasibility(desc, kb)) != "pass":
            reason = v
        elif check_duplicate(desc, seen, config.jaccard_threshold, config.dedup_exact_api_kind) != "pass":
            reason = "CD"
        else:
            if calibration is None:
                raise DataError("no calibration dataset available for the distinguishability gate")
            acc, verdict = check_distinguishability(desc, event, calibration, config)
            if verdict != "pass":
                reason = "LD"
        log.record(batch=batch, channel_id=desc.channel_id, verdict=reason or "accepted", accuracy=acc)
        if reason is None:
            accepted.append(desc.accepted(acc))
            seen.add(accepted[-1], "discovered")
        else:
            rejected.append((desc.rejected(reason, acc), reason, batch))
    return accepted, rejected


def run_discovery(
    event: EventSpec,
    kb: KnowledgeBase,
    seed_db: ChannelDatabase,
    proposer: ProposerAdapter,
    verifier: VerifierAdapter | None = None,
    config: DiscoveryConfig | None = None,
    calibration: Dataset | None = None,
) -> DiscoveryResult:
    """Run the propose-verify loop.

    ``calibration`` must hold training-split traces only; when omitted it
    is read from ``event.calibration_dataset_path``.
    """
    config = config or DiscoveryConfig()
    if calibration is None and event.calibration_dataset_path:
        calibration = load_dataset(event.calibration_dataset_path)
    db = seed_db.copy()
    ledger = FeedbackLedger()
    log = DiscoveryLog()
    B = config.batch_size_B
    prompt = default_prompt(event)
    failures = 0
    t = 0
    while True:
        if t >= config.max_batches:
            log.stop_reason = f"budget of {config.max_batches} batches reached"
            break
        request = ProposalRequest(
            event, B, db.summary(), summarize_feedback(ledger, t - 1) if t else "", prompt
        )
        try:
            proposals = list(proposer.propose(request))
            if len(proposals) > B:
                log.record(batch=t, warning=f"{len(proposals)} proposals truncated to {B}")
                proposals = proposals[:B]
            accepted, rejected = _verify_batch(proposals, event, kb, db, verifier, calibration, config, t, log)
        except AdapterError as exc:
            failures += 1
            log.record(batch=t, adapter_error=f"{type(exc).__name__}: {exc}")
            if failures > config.adapter_retries:
                raise
            continue
        for desc in accepted:
            db.add(desc, "discovered")
        ledger.rejected.extend(rejected)
        rho = len(accepted) / B
        ledger.batch_stats.append((t, rho))
        log.record(batch=t, proposals=len(proposals), accepted=len(accepted), acceptance_rate=rho)
        if rho < config.tau_stop:
            log.stop_reason = f"acceptance rate {rho:g} < {config.tau_stop:g} at batch {t}"
            break
        t += 1
    return DiscoveryResult(db, ledger, log)


def make_calibration_set(train: Dataset, per_class: int = 10, seed: int = 0) -> Dataset:
    """Seeded per-class subsample of the training split."""
    keep: list[int] = []
    for k, idx in enumerate(train.class_indices().values()):
        order = _util.derive_rng(seed, "calibration", k).permutation(len(idx))
        keep.extend(idx[j] for j in order[:per_class])
    return train.subset(sorted(keep))
