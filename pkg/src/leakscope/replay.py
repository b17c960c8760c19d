"""Scripted replay fixtures for the discovery loop.

:func:`build_replay` turns a per-batch disposition plan into a complete,
self-consistent fixture: proposal descriptors, the knowledge base they are
checked against, an event spec, and a synthetic calibration scenario in
which every channel meant to be accepted is informative and every channel
meant to fail the distinguishability gate is pure noise.  Running the real
checks over it must reproduce the plan exactly.

``REPLAY_PLAN`` reproduces the 80-proposal run with 7 BER, 3 SE, 30 LD,
1 CD rejections and 39 acceptances, stopping after the eighth batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

from . import _util
from .adapters import save_script
from .discovery import ChannelDescriptor, EventSpec, KnowledgeBase
from .synth import PATTERNS, ScenarioConfig, SyntheticChannelConfig

# (accepted, BER, SE, LD, CD) per batch of 10
REPLAY_PLAN = [
    (6, 1, 1, 2, 0),
    (6, 1, 0, 3, 0),
    (5, 1, 0, 3, 1),
    (5, 1, 1, 3, 0),
    (5, 1, 0, 4, 0),
    (6, 1, 0, 3, 0),
    (5, 1, 1, 3, 0),
    (1, 0, 0, 9, 0),
]

_WORDS = (
    "compressor pager swap loopback inbound outbound packet volume inode cache "
    "font glyph allocator resolver jitter colorspace metadata socket defaults "
    "speech dispatch shader neural audio motion keychain session spotlight "
    "thumbnail calendar wakeup scheduler thermal battery vnode mount timer "
    "semaphore mach port vsync render layer"
).split()


@dataclass
class ReplayFixture:
    records: list[tuple[ChannelDescriptor, str]]
    kb: KnowledgeBase
    event: EventSpec
    scenario: ScenarioConfig

    def write(self, directory: str | Path, stem: str) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "script": d / f"{stem}.jsonl",
            "kb": d / f"{stem}_kb.json",
            "event": d / f"{stem}_event.json",
            "scenario": d / f"{stem}_calibration.scenario.json",
        }
        save_script(self.records, paths["script"])
        _util.write_json(paths["kb"], self.kb.to_dict())
        _util.write_json(
            paths["event"],
            {"event_id": self.event.event_id, "n_classes": self.event.n_classes, "description": self.event.description, "calibration_dataset_path": None},
        )
        _util.write_json(paths["scenario"], self.scenario.to_dict())
        return paths


def _description(i: int) -> str:
    w = [_WORDS[(i * 7 + j * 3) % len(_WORDS)] for j in range(3)]
    return f"{w[0]} {w[1]} {w[2]} counter drift number {i}"


def build_replay(
    plan=REPLAY_PLAN,
    n_classes: int = 6,
    traces_per_class: int = 10,
    n_samples: int = 64,
    seed: int = 80,
) -> ReplayFixture:
    records: list[tuple[ChannelDescriptor, str]] = []
    apis: set[str] = set()
    notes: dict[str, dict] = {}
    channels: list[SyntheticChannelConfig] = []
    first_accepted: ChannelDescriptor | None = None
    rng = _util.derive_rng(seed, "replay-order")
    i = 0
    for accepted, ber, se, ld, cd in plan:
        batch = ["accept"] * accepted + ["BER"] * ber + ["SE"] * se + ["LD"] * ld + ["CD"] * cd
        batch = [batch[j] for j in rng.permutation(len(batch))]
        for disposition in batch:
            cid = f"ch_{i:02d}"
            api = f"api_{i:02d}"
            desc = dict(channel_id=cid, api_name=api, signal_description=_description(i), probe_kind=("passive", "active")[i % 2])
            if disposition == "BER":
                if i % 2:
                    desc["available_in_background"] = False
                else:
                    # claims background access the knowledge base contradicts
                    notes[api] = {"available_in_background": False}
            elif disposition == "SE":
                desc["sandbox_scope"] = "privileged" if i % 2 else "cross_sandbox"
            elif disposition == "CD":
                if first_accepted is None:
                    raise ValueError("a CD proposal needs an earlier accepted channel")
                desc.update(api_name=first_accepted.api_name, probe_kind=first_accepted.probe_kind)
                api = first_accepted.api_name
            elif disposition in ("accept", "LD"):
                channels.append(
                    SyntheticChannelConfig(
                        cid,
                        "informative" if disposition == "accept" else "uninformative",
                        PATTERNS[i % 3],
                        0.3,
                    )
                )
            d = ChannelDescriptor(**desc)
            if disposition == "accept" and first_accepted is None:
                first_accepted = d
            apis.add(api)
            records.append((d, disposition))
            i += 1
    kb = KnowledgeBase(apis, notes)
    event = EventSpec("replay_event", n_classes, "synthetic replay event")
    scenario = ScenarioConfig(
        n_classes=n_classes,
        traces_per_class=traces_per_class,
        n_samples=n_samples,
        channels=channels,
        sample_rate_hz=100.0,
        max_shift_fraction=0.2,
        seed=seed,
    )
    return ReplayFixture(records, kb, event, scenario)


def fixture_path(name: str) -> Path:
    """Path of a fixture shipped with the package (e.g. ``gemini80.jsonl``)."""
    return Path(str(files("leakscope").joinpath("data/fixtures", name)))


if __name__ == "__main__":
    build_replay().write(fixture_path(""), "gemini80")
