"""Append-only JSONL logs and snapshot files.

Every durable store in the kernel shares the same on-disk grammar: a header
line ``{"format_version": 1}`` followed by one JSON object per line. Appends
are flushed per batch. A torn final line (interrupted write) is tolerated on
read and truncated on the next rewrite; corruption anywhere earlier is an
error, because it means history was altered rather than an append cut short.

Snapshots use the same header line followed by a single JSON array line.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import StorageError

FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    """Deterministic single-line JSON: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _header_line() -> str:
    return canonical_json({"format_version": FORMAT_VERSION})


def _check_header(line: str, path: Path) -> None:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise StorageError(f"{path}: unreadable header line")
    if not isinstance(obj, dict) or obj.get("format_version") != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported format_version in header: {line.strip()!r}")


class EventLog:
    """Append-only JSONL file with a format_version header."""

    def __init__(self, path: Path | str):
        self.path = Path(path)

    def exists(self) -> bool:
        return self.path.exists()

    def append(self, record: dict) -> None:
        self.append_many([record])

    def append_many(self, records: list[dict]) -> None:
        if not records:
            return
        fresh = not self.path.exists()
        chunks = []
        if fresh:
            chunks.append(_header_line() + "\n")
        chunks.extend(canonical_json(r) + "\n" for r in records)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write("".join(chunks))
            fh.flush()
            os.fsync(fh.fileno())

    def read_all(self) -> list[dict]:
        """Read every intact record, tolerating a torn final line only."""
        if not self.path.exists():
            return []
        raw = self.path.read_text(encoding="utf-8")
        if not raw:
            return []
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            return []
        _check_header(lines[0], self.path)
        records = []
        last = len(lines) - 1
        for i, line in enumerate(lines[1:], 1):
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                if i == last:
                    break  # torn tail from an interrupted append
                raise StorageError(f"{self.path}: corrupt record at line {i + 1}")
        return records

    def rewrite(self, records: list[dict]) -> None:
        """Atomically replace the log contents (compaction)."""
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        body = _header_line() + "\n" + "".join(canonical_json(r) + "\n" for r in records)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(body)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)


def write_snapshot(path: Path | str, records: list) -> None:
    """Write a snapshot file: header line + one JSON array line, atomically."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    body = _header_line() + "\n" + canonical_json(records) + "\n"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(body)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_snapshot(path: Path | str) -> list:
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2:
        raise StorageError(f"{path}: snapshot is missing its payload line")
    _check_header(lines[0], path)
    try:
        records = json.loads(lines[1])
    except json.JSONDecodeError:
        raise StorageError(f"{path}: unreadable snapshot payload")
    if not isinstance(records, list):
        raise StorageError(f"{path}: snapshot payload is not an array")
    return records
