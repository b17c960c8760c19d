"""Seeded RNG streams and the shared JSON text format helpers."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import IoFailure

SEED_MASK = (1 << 64) - 1


def derive_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, index)``.

    Streams are keyed by a hash so that adding a new consumer (an extra
    channel, another trace) never perturbs the draws of existing ones.
    """
    digest = hashlib.sha256(f"{int(seed) & SEED_MASK}/{tag}/{int(index)}".encode()).digest()
    words = np.frombuffer(digest, dtype="<u4").tolist()
    return np.random.default_rng(np.random.SeedSequence(words))


def dumps(obj: Any) -> str:
    # json emits floats via repr(), i.e. the shortest round-trip decimal.
    return json.dumps(obj, separators=(",", ":"), allow_nan=False, ensure_ascii=False)


def write_text(path: str | Path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_json(path: str | Path, obj: Any) -> None:
    write_text(path, dumps(obj) + "\n")


def write_jsonl(path: str | Path, records: Iterable[Any]) -> None:
    write_text(path, "".join(dumps(r) + "\n" for r in records))


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def read_json(path: str | Path) -> Any:
    from .errors import DataError

    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def to_list(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()
