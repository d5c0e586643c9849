"""Experience records and the store that owns them.

An experience record captures one reusable behavioral prior: the inferred
intent it applies to, the distilled execution script, the raw trajectory
digest, and a learned per-dimension value vector that later episodes update
through delayed credit. The store owns record identity, near-duplicate
replacement, visit accounting, and an append-only persistence log with
periodic snapshots.

Near-duplicate replacement fires only when BOTH intent similarity and script
similarity reach their thresholds. The incumbent keeps its learned q_values
and visit_count (they summarize reuse history, which is the whole point of
keeping the record) and adopts the newcomer's content; its revision counter
increments so the swap is visible.

Persistence is write-ahead: every mutation appends exactly one batch of log
entries before touching in-memory state, so a crash at any point replays to
a consistent store.
"""

from __future__ import annotations

import copy
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clock import LogicalClock
from .config import N_REWARD_DIMS, KernelConfig
from .errors import NotFoundError, StorageError, ValidationError
from .eventlog import EventLog, read_snapshot, write_snapshot
from .similarity import SimilarityProvider, TrigramSimilarity


def q_step(q: float, r: float, alpha: float, c: float) -> float:
    """One credit update on a single dimension.

    q' = (1 - alpha*c) * q + alpha*c * r, clipped to [-1, 1]. The clip exists
    only to absorb last-ulp rounding at the boundary; mathematically the
    convex combination never leaves the interval. Both the store and the
    replay oracle use this exact function, so replayed values are
    bit-identical to stored ones.
    """
    a = alpha * c
    v = (1.0 - a) * q + a * r
    if v > 1.0:
        return 1.0
    if v < -1.0:
        return -1.0
    return v


def q_step_vector(q_values: list[float], r: tuple, alpha: float, c: float) -> list[float]:
    return [q_step(q, float(rv), alpha, c) for q, rv in zip(q_values, r)]


@dataclass
class ExperienceRecord:
    """One stored behavioral prior."""

    id: int
    intent: str
    script: str
    digest: str
    q_values: list[float]
    visit_count: int = 0
    source_model: str = ""
    used_experience_ids: list[int] = field(default_factory=list)
    revision: int = 0
    created_at: int = 0
    updated_at: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "intent": self.intent,
            "script": self.script,
            "digest": self.digest,
            "q_values": list(self.q_values),
            "visit_count": self.visit_count,
            "source_model": self.source_model,
            "used_experience_ids": list(self.used_experience_ids),
            "revision": self.revision,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperienceRecord":
        return cls(
            id=int(d["id"]),
            intent=d["intent"],
            script=d["script"],
            digest=d["digest"],
            q_values=[float(v) for v in d["q_values"]],
            visit_count=int(d["visit_count"]),
            source_model=d.get("source_model", ""),
            used_experience_ids=[int(i) for i in d.get("used_experience_ids", [])],
            revision=int(d.get("revision", 0)),
            created_at=int(d.get("created_at", 0)),
            updated_at=int(d.get("updated_at", 0)),
        )


@dataclass(frozen=True)
class ExperienceDraft:
    """Content of a record before the store assigns identity and values."""

    intent: str
    script: str
    digest: str
    source_model: str = ""
    used_experience_ids: tuple[int, ...] = ()
    q_init: tuple[float, ...] | None = None
    visit_count: int = 0

    def validate(self) -> None:
        for name in ("intent", "script", "digest"):
            if not getattr(self, name):
                raise ValidationError(name, "must be non-empty")
        if self.q_init is not None:
            if len(self.q_init) != N_REWARD_DIMS:
                raise ValidationError("q_init", f"expected {N_REWARD_DIMS} components")
            for v in self.q_init:
                if not (-1.0 <= v <= 1.0):
                    raise ValidationError("q_init", f"component {v} outside [-1, 1]")
        if self.visit_count < 0:
            raise ValidationError("visit_count", "must be non-negative")


@dataclass(frozen=True)
class InsertOutcome:
    kind: str  # "added" | "replaced"
    id: int
    incumbent_id: int | None = None


@dataclass(frozen=True)
class SnapshotStats:
    records: int
    folded_entries: int


class ExperienceStore:
    """Single-writer store of experience records.

    Runs fully in memory when no paths are given; with paths, every mutation
    is logged write-ahead and `compact` folds the log into a snapshot.
    Readers get copies; internal state is never handed out.
    """

    def __init__(
        self,
        provider: SimilarityProvider | None = None,
        clock: LogicalClock | None = None,
        log_path: Path | str | None = None,
        snapshot_path: Path | str | None = None,
    ):
        self.provider = provider if provider is not None else TrigramSimilarity()
        self.clock = clock if clock is not None else LogicalClock()
        self._records: dict[int, ExperienceRecord] = {}
        self._next_id = 1
        self._intent_vecs: dict[int, np.ndarray] = {}
        self._script_vecs: dict[int, np.ndarray] = {}
        self._matrix_cache: tuple[tuple[int, ...], np.ndarray, np.ndarray] | None = None
        self._entries: list[dict] = []  # in-memory mirror of the log tail
        self._log = EventLog(log_path) if log_path is not None else None
        self._snapshot_path = Path(snapshot_path) if snapshot_path is not None else None
        if self._log is not None or self._snapshot_path is not None:
            self._load()

    # -- loading / replay ---------------------------------------------------

    def _load(self) -> None:
        if self._snapshot_path is not None and self._snapshot_path.exists():
            for d in read_snapshot(self._snapshot_path):
                rec = ExperienceRecord.from_dict(d)
                self._admit(rec)
        if self._log is not None:
            for entry in self._log.read_all():
                self._apply_entry(entry)
                self._entries.append(entry)

    def _admit(self, rec: ExperienceRecord) -> None:
        self._records[rec.id] = rec
        self._intent_vecs[rec.id] = self.provider.embed(rec.intent)
        self._script_vecs[rec.id] = self.provider.embed(rec.script)
        self._matrix_cache = None
        if rec.id >= self._next_id:
            self._next_id = rec.id + 1

    def _apply_entry(self, entry: dict) -> None:
        op = entry.get("op")
        if op == "insert":
            self._admit(ExperienceRecord.from_dict(entry["record"]))
        elif op == "replace":
            rec = self._records[int(entry["id"])]
            rec.intent = entry["intent"]
            rec.script = entry["script"]
            rec.digest = entry["digest"]
            rec.source_model = entry["source_model"]
            rec.used_experience_ids = [int(i) for i in entry["used_experience_ids"]]
            rec.revision = int(entry["revision"])
            rec.updated_at = int(entry["updated_at"])
            self._intent_vecs[rec.id] = self.provider.embed(rec.intent)
            self._script_vecs[rec.id] = self.provider.embed(rec.script)
            self._matrix_cache = None
        elif op == "credit":
            rec = self._records[int(entry["id"])]
            # Recompute the fold rather than trusting the logged after-value;
            # identical float operations make this bit-exact.
            rec.q_values = q_step_vector(
                rec.q_values, tuple(entry["r"]), float(entry["alpha"]), float(entry["c"])
            )
        elif op == "visit":
            for i in entry["ids"]:
                self._records[int(i)].visit_count += 1
        else:
            raise StorageError(f"unknown log op {op!r}")

    def _commit(self, entries: list[dict]) -> None:
        """Write-ahead append, then apply to memory."""
        if self._log is not None:
            self._log.append_many(entries)
        for entry in entries:
            self._apply_entry(entry)
        self._entries.extend(entries)

    # -- similarity plumbing ------------------------------------------------

    def _matrices(self) -> tuple[tuple[int, ...], np.ndarray, np.ndarray]:
        if self._matrix_cache is None:
            ids = tuple(self._records.keys())
            if ids:
                mi = np.vstack([self._intent_vecs[i] for i in ids])
                ms = np.vstack([self._script_vecs[i] for i in ids])
            else:
                dim = getattr(self.provider, "dim", 1)
                mi = np.zeros((0, dim))
                ms = np.zeros((0, dim))
            self._matrix_cache = (ids, mi, ms)
        return self._matrix_cache

    def _sims_against(self, matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
        if matrix.shape[0] == 0:
            return np.zeros(0)
        return np.clip((matrix @ vec + 1.0) / 2.0, 0.0, 1.0)

    def intent_similarities(self, query: str) -> tuple[tuple[int, ...], np.ndarray]:
        """Similarity of every stored intent to the query, insertion order.

        Batched through embeddings; identical texts are pinned to exactly 1.0
        to honor the provider's identity axiom.
        """
        ids, mi, _ = self._matrices()
        sims = self._sims_against(mi, self.provider.embed(query))
        for idx, i in enumerate(ids):
            if self._records[i].intent == query:
                sims[idx] = 1.0
        return ids, sims

    def _dual_similarities(self, intent: str, script: str) -> tuple[tuple[int, ...], np.ndarray, np.ndarray]:
        ids, mi, ms = self._matrices()
        isims = self._sims_against(mi, self.provider.embed(intent))
        ssims = self._sims_against(ms, self.provider.embed(script))
        for idx, i in enumerate(ids):
            rec = self._records[i]
            if rec.intent == intent:
                isims[idx] = 1.0
            if rec.script == script:
                ssims[idx] = 1.0
        return ids, isims, ssims

    # -- public surface -----------------------------------------------------

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._records

    def ids(self) -> list[int]:
        return list(self._records.keys())

    def get(self, record_id: int) -> ExperienceRecord:
        rec = self._records.get(record_id)
        if rec is None:
            raise NotFoundError(f"experience record {record_id} not found")
        return copy.deepcopy(rec)

    def peek(self, record_id: int) -> ExperienceRecord:
        """Internal-view access for read-only hot paths. Do not mutate."""
        rec = self._records.get(record_id)
        if rec is None:
            raise NotFoundError(f"experience record {record_id} not found")
        return rec

    def list_records(self, predicate=None) -> list[ExperienceRecord]:
        recs = sorted(self._records.values(), key=lambda r: (r.created_at, r.id))
        if predicate is not None:
            recs = [r for r in recs if predicate(r)]
        return [copy.deepcopy(r) for r in recs]

    def insert(
        self,
        draft: ExperienceDraft,
        config: KernelConfig,
        record_id: int | None = None,
    ) -> InsertOutcome:
        """Add a record or replace a near-duplicate incumbent.

        A replacement requires an incumbent whose intent similarity is at
        least tau_intent AND whose script similarity is at least tau_script;
        among several such incumbents the closest (highest similarity sum,
        ties to the oldest id) wins. Exactly one log entry is written either
        way. `record_id` lets bundle import keep donor identities when the
        id is still free.
        """
        draft.validate()
        for used in draft.used_experience_ids:
            if used not in self._records:
                raise ValidationError(
                    "used_experience_ids", f"referenced record {used} does not exist"
                )
        now = self.clock.now
        ids, isims, ssims = self._dual_similarities(draft.intent, draft.script)
        best = None
        for idx, i in enumerate(ids):
            if isims[idx] >= config.tau_intent and ssims[idx] >= config.tau_script:
                key = (-(isims[idx] + ssims[idx]), i)
                if best is None or key < best[0]:
                    best = (key, i)
        if best is not None:
            incumbent = self._records[best[1]]
            entry = {
                "op": "replace",
                "id": incumbent.id,
                "intent": draft.intent,
                "script": draft.script,
                "digest": draft.digest,
                "source_model": draft.source_model,
                "used_experience_ids": list(draft.used_experience_ids),
                "revision": incumbent.revision + 1,
                "updated_at": now,
            }
            self._commit([entry])
            return InsertOutcome("replaced", incumbent.id, incumbent_id=incumbent.id)

        if record_id is not None and record_id > 0 and record_id not in self._records:
            new_id = record_id
        else:
            new_id = self._next_id
        q = list(draft.q_init) if draft.q_init is not None else [0.0] * N_REWARD_DIMS
        rec = ExperienceRecord(
            id=new_id,
            intent=draft.intent,
            script=draft.script,
            digest=draft.digest,
            q_values=[float(v) for v in q],
            visit_count=draft.visit_count,
            source_model=draft.source_model,
            used_experience_ids=list(draft.used_experience_ids),
            revision=0,
            created_at=now,
            updated_at=now,
        )
        self._commit([{"op": "insert", "record": rec.to_dict()}])
        return InsertOutcome("added", new_id)

    def record_visits(self, ids: list[int], t: int) -> None:
        """Increment visit counts for retrieved records."""
        if not ids:
            return
        for i in ids:
            if i not in self._records:
                raise NotFoundError(f"experience record {i} not found")
        self._commit([{"op": "visit", "ids": [int(i) for i in ids], "t": int(t)}])

    def credit_update(
        self, ids, t: int, alpha: float, c: float, r: tuple
    ) -> list[tuple[int, list[float], list[float]]]:
        """Apply one delayed credit step to every record in the usage set.

        Atomic across the set: ids are validated up front, and all entries
        land in one log batch. Returns (id, q_before, q_after) triples in
        ascending id order.
        """
        ordered = sorted(set(int(i) for i in ids))
        for i in ordered:
            if i not in self._records:
                raise NotFoundError(f"experience record {i} not found")
        if len(r) != N_REWARD_DIMS:
            raise ValidationError("r", f"expected {N_REWARD_DIMS} components")
        entries = []
        results = []
        for i in ordered:
            q_before = list(self._records[i].q_values)
            q_after = q_step_vector(q_before, r, alpha, c)
            entries.append(
                {
                    "op": "credit",
                    "id": i,
                    "t": int(t),
                    "alpha": float(alpha),
                    "c": float(c),
                    "r": [int(v) if float(v).is_integer() else float(v) for v in r],
                    "q_before": q_before,
                    "q_after": q_after,
                }
            )
            results.append((i, q_before, q_after))
        if entries:
            self._commit(entries)
        return results

    def compact(self) -> SnapshotStats:
        """Fold the log into the snapshot file and truncate the log."""
        folded = len(self._entries)
        if self._snapshot_path is not None:
            ordered = [self._records[i].to_dict() for i in sorted(self._records)]
            write_snapshot(self._snapshot_path, ordered)
            if self._log is not None:
                self._log.rewrite([])
        self._entries = []
        return SnapshotStats(records=len(self._records), folded_entries=folded)

    def log_entries(self) -> list[dict]:
        """Log tail since the last compaction (replay-oracle input)."""
        return copy.deepcopy(self._entries)

    def state_fingerprint(self) -> str:
        """Canonical serialization of the full state, for equality checks."""
        from .eventlog import canonical_json

        ordered = [self._records[i].to_dict() for i in sorted(self._records)]
        return canonical_json({"records": ordered, "next_id": self._next_id})

    @contextmanager
    def transaction(self):
        """All-or-nothing scope for multi-insert operations (bundle import).

        On exception the in-memory state is restored and any log bytes
        appended inside the scope are truncated away.
        """
        saved_records = copy.deepcopy(self._records)
        saved_next = self._next_id
        saved_ivecs = {k: v.copy() for k, v in self._intent_vecs.items()}
        saved_svecs = {k: v.copy() for k, v in self._script_vecs.items()}
        saved_entries = list(self._entries)
        log_size = None
        if self._log is not None and self._log.path.exists():
            log_size = self._log.path.stat().st_size
        try:
            yield
        except Exception:
            self._records = saved_records
            self._next_id = saved_next
            self._intent_vecs = saved_ivecs
            self._script_vecs = saved_svecs
            self._entries = saved_entries
            self._matrix_cache = None
            if self._log is not None:
                if log_size is None:
                    if self._log.path.exists():
                        self._log.path.unlink()
                elif self._log.path.exists():
                    os.truncate(self._log.path, log_size)
            raise
