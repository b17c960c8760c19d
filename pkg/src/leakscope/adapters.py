"""Proposer and verifier adapters for the discovery loop.

* ``scripted:<path>``: replays a JSONL fixture of
  ``{"descriptor": {...}, "disposition": "..."}`` records in batches.
* ``queue:<dir>``: consumes one JSON descriptor array per file, in name order.
* ``http://...`` / ``https://...``: POSTs ``{prompt, feedback, db_summary}``
  and extracts the first descriptor array found in the reply body.
"""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any

from . import _util
from .discovery import ChannelDescriptor, KnowledgeBase, ProposalRequest
from .errors import AdapterError, AdapterMalformedOutput, AdapterTimeout, DataError

DISPOSITIONS = ("accept", "BER", "SE", "LD", "CD", "SEM")


def load_script(path: str | Path) -> list[tuple[ChannelDescriptor, str]]:
    records = []
    for n, line in enumerate(_util.read_text(path).splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            desc = ChannelDescriptor.from_dict(rec["descriptor"])
        except (json.JSONDecodeError, KeyError, TypeError, DataError) as exc:
            raise DataError(f"{path}:{n + 1}: bad fixture record ({exc})") from exc
        disposition = rec.get("disposition", "accept")
        if disposition not in DISPOSITIONS:
            raise DataError(f"{path}:{n + 1}: unknown disposition {disposition!r}")
        records.append((desc, disposition))
    return records


def save_script(records, path: str | Path) -> None:
    _util.write_jsonl(path, [{"descriptor": d.to_dict(), "disposition": disp} for d, disp in records])


class ScriptedProposer:
    """Replays fixture descriptors ``batch_size`` at a time; empty when exhausted."""

    def __init__(self, records: list[tuple[ChannelDescriptor, str]]):
        self.records = list(records)
        self.position = 0
        self.requests: list[ProposalRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProposer":
        return cls(load_script(path))

    @property
    def expected(self) -> list[str]:
        return [d for _, d in self.records]

    def propose(self, request: ProposalRequest) -> list[ChannelDescriptor]:
        self.requests.append(request)
        batch = self.records[self.position : self.position + request.batch_size]
        self.position += len(batch)
        return [d for d, _ in batch]


class FileQueueProposer:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise AdapterError(f"queue directory {directory} does not exist")
        self.consumed: set[str] = set()

    def propose(self, request: ProposalRequest) -> list[ChannelDescriptor]:
        pending = sorted(p for p in self.directory.glob("*.json") if p.name not in self.consumed)
        if not pending:
            return []
        path = pending[0]
        self.consumed.add(path.name)
        return parse_descriptor_array(_util.read_text(path))


def parse_descriptor_array(body: str) -> list[ChannelDescriptor]:
    """First well-formed descriptor array in ``body``.

    Accepts a bare array, an object with a ``descriptors`` array, or prose
    with an array embedded in it.
    """
    decoder = json.JSONDecoder()
    candidates: list[Any] = []
    try:
        whole = json.loads(body)
        candidates.append(whole.get("descriptors") if isinstance(whole, dict) else whole)
    except json.JSONDecodeError:
        for i, ch in enumerate(body):
            if ch == "[":
                try:
                    candidates.append(decoder.raw_decode(body, i)[0])
                    break
                except json.JSONDecodeError:
                    continue
    for cand in candidates:
        if isinstance(cand, list) and all(isinstance(x, dict) for x in cand):
            try:
                return [ChannelDescriptor.from_dict({**x, "status": "proposed", "rejection_reason": None, "measured_accuracy": None}) for x in cand]
            except DataError as exc:
                raise AdapterMalformedOutput(f"malformed descriptor: {exc}") from exc
    raise AdapterMalformedOutput("reply does not contain a descriptor array")


def _post_json(url: str, payload: dict, timeout: float) -> str:
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read().decode("utf-8", errors="replace")
    except (socket.timeout, TimeoutError) as exc:
        raise AdapterTimeout(f"{url} did not answer within {timeout}s") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise AdapterTimeout(f"{url} did not answer within {timeout}s") from exc
        raise AdapterError(f"cannot reach {url}: {exc.reason}") from exc


class HttpProposer:
    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def propose(self, request: ProposalRequest) -> list[ChannelDescriptor]:
        body = _post_json(
            self.url,
            {"prompt": request.prompt, "feedback": request.feedback, "db_summary": request.db_summary},
            self.timeout,
        )
        return parse_descriptor_array(body)


class ScriptedVerifier:
    """Fixed verdicts by channel_id; unknown channels pass."""

    def __init__(self, verdicts: dict[str, bool]):
        self.verdicts = dict(verdicts)
        self.calls: list[str] = []

    def verify(self, desc: ChannelDescriptor, kb: KnowledgeBase) -> bool:
        self.calls.append(desc.channel_id)
        return self.verdicts.get(desc.channel_id, True)


class HttpVerifier:
    """POSTs ``{descriptor}`` and expects ``{"verdict": "pass"|"fail"}``."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def verify(self, desc: ChannelDescriptor, kb: KnowledgeBase) -> bool:
        body = _post_json(self.url, {"descriptor": desc.to_dict()}, self.timeout)
        try:
            verdict = json.loads(body)["verdict"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise AdapterMalformedOutput(f"verifier reply lacks a verdict: {body[:200]!r}") from exc
        if verdict not in ("pass", "fail"):
            raise AdapterMalformedOutput(f"verifier verdict must be pass|fail, got {verdict!r}")
        return verdict == "pass"


def make_proposer(spec: str, timeout: float = 60.0):
    if spec.startswith("scripted:"):
        return ScriptedProposer.from_file(spec[len("scripted:") :])
    if spec.startswith("queue:"):
        return FileQueueProposer(spec[len("queue:") :])
    if spec.startswith(("http://", "https://")):
        return HttpProposer(spec, timeout)
    raise DataError(f"unknown proposer spec {spec!r} (scripted:<path>, queue:<dir>, http(s)://...)")


def make_verifier(spec: str | None, timeout: float = 60.0):
    if not spec:
        return None
    if spec.startswith(("http://", "https://")):
        return HttpVerifier(spec, timeout)
    if spec.startswith("scripted:"):
        data = _util.read_json(spec[len("scripted:") :])
        return ScriptedVerifier({k: v == "pass" or v is True for k, v in data.items()})
    raise DataError(f"unknown verifier spec {spec!r}")
