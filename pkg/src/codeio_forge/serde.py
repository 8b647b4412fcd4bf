"""Canonical JSON, stable hashing, and JSONL file helpers shared by all stages."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def canonical_json(value: Any) -> str:
    """Render a JSON value deterministically: sorted keys, no extra whitespace.

    Used wherever a value must hash or compare stably (prompt embedding,
    input dedup, mock fixture keys). Floats render shortest-round-trip.
    """
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def display_json(value: Any) -> str:
    """Render a JSON value for human-facing text (feedback, bare answers).

    Keeps insertion order and the default ", " / ": " separators, so an
    answer echoed back to the model reads the way the model wrote it.
    """
    return json.dumps(value, ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def stable_hash64(text: str) -> int:
    """First 8 bytes of sha256 as an unsigned int. Stable across runs and platforms."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def is_json_value(value: Any) -> bool:
    """True iff value is null/bool/number/string or a list/str-keyed map of such."""
    if value is None or isinstance(value, (bool, str)):
        return True
    if isinstance(value, (int, float)):
        return True
    if isinstance(value, list):
        return all(is_json_value(v) for v in value)
    if isinstance(value, dict):
        return all(isinstance(k, str) and is_json_value(v) for k, v in value.items())
    return False


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON line: {exc}") from exc


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    """Write rows as one JSON object per line. Returns the row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
