"""Portable experience bundles.

A bundle is the transfer unit for learned experience: full records including
q_values and visit counts, since content without the learned values would
throw the learning away. The file is one header line naming the source
kernel, the record count, and a sha-256 checksum of the body, followed by
one canonical JSON line per record in ascending id order. Export is
deterministic: the same store produces byte-identical files.

Import feeds every record through the store's normal insert path, so the
near-duplicate rules apply, and runs as a single transaction: a bad checksum
or a mid-import failure leaves the store untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .config import KernelConfig
from .errors import ChecksumError, StorageError, ValidationError
from .eventlog import canonical_json
from .experience import ExperienceDraft, ExperienceRecord, ExperienceStore

BUNDLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ImportReport:
    added: int
    replaced: int
    skipped: int

    @property
    def total(self) -> int:
        return self.added + self.replaced + self.skipped


def export_bundle(
    store: ExperienceStore,
    path: Path | str,
    source_kernel_id: str,
    predicate=None,
) -> Path:
    """Write the store (or a filtered subset) as a checksummed bundle file."""
    path = Path(path)
    records = store.list_records(predicate)
    records.sort(key=lambda r: r.id)
    body = "".join(canonical_json(r.to_dict()) + "\n" for r in records)
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    header = json.dumps(
        {
            "format_version": BUNDLE_FORMAT_VERSION,
            "source_kernel_id": source_kernel_id,
            "record_count": len(records),
            "checksum": checksum,
        },
        separators=(",", ":"),
        ensure_ascii=False,
    )
    path.write_text(header + "\n" + body, encoding="utf-8")
    return path


def load_bundle(path: Path | str) -> tuple[dict, list[ExperienceRecord]]:
    """Read and verify a bundle; checksum or version trouble rejects it whole."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read bundle {path}: {exc}") from exc
    newline = raw.find("\n")
    if newline < 0:
        raise ValidationError("bundle", "file has no header line")
    header_line, body = raw[:newline], raw[newline + 1 :]
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError:
        raise ValidationError("bundle", "unreadable header line")
    if header.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise ValidationError(
            "format_version", f"unsupported bundle version {header.get('format_version')!r}"
        )
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if actual != header.get("checksum"):
        raise ChecksumError(
            f"bundle checksum mismatch: header says {header.get('checksum')!r}, body is {actual!r}"
        )
    lines = [ln for ln in body.split("\n") if ln]
    if len(lines) != header.get("record_count"):
        raise ValidationError(
            "record_count", f"header says {header.get('record_count')}, found {len(lines)}"
        )
    records = [ExperienceRecord.from_dict(json.loads(ln)) for ln in lines]
    for a, b in zip(records, records[1:]):
        if a.id >= b.id:
            raise ValidationError("bundle", "records are not in ascending id order")
    return header, records


def import_bundle(
    store: ExperienceStore,
    path: Path | str,
    config: KernelConfig,
    reset_visits: bool = False,
) -> ImportReport:
    """Merge a bundle through the store's insert path, atomically.

    Records identical in content to an existing record are skipped, which
    makes re-importing the same bundle a no-op. Donor ids are kept when free
    (an import into a fresh store preserves identity exactly); otherwise a
    fresh id is assigned and provenance links are remapped through the
    translation built so far. Added records keep the bundle's q_values and
    visit counts (unless reset_visits); a replaced incumbent keeps its own,
    per the store's replacement rule.
    """
    _, records = load_bundle(path)
    added = replaced = skipped = 0
    id_map: dict[int, int] = {}
    existing_by_content = {
        (r.intent, r.script, r.digest): r.id for r in store.list_records()
    }
    with store.transaction():
        for rec in records:
            key = (rec.intent, rec.script, rec.digest)
            if key in existing_by_content:
                skipped += 1
                id_map[rec.id] = existing_by_content[key]
                continue
            used = tuple(id_map[u] for u in rec.used_experience_ids if u in id_map)
            draft = ExperienceDraft(
                intent=rec.intent,
                script=rec.script,
                digest=rec.digest,
                source_model=rec.source_model,
                used_experience_ids=used,
                q_init=tuple(rec.q_values),
                visit_count=0 if reset_visits else rec.visit_count,
            )
            outcome = store.insert(draft, config, record_id=rec.id)
            id_map[rec.id] = outcome.id
            if outcome.kind == "added":
                added += 1
                existing_by_content[key] = outcome.id
            else:
                replaced += 1
                existing_by_content[key] = outcome.id
    return ImportReport(added=added, replaced=replaced, skipped=skipped)
