"""Delayed credit assignment.

When turn t is finally judged, the reward flows back to every experience
that was injected while solving the turn (the usage set A_t), moving each
record's per-dimension value toward the observed reward by a step scaled
with judge confidence: Q' = (1 - alpha*c) * Q + alpha*c * r.

The update is atomic across the usage set and every step is logged, so a
brute-force fold over the log reproduces stored values exactly. That fold is
the replay oracle tests lean on.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import KernelConfig
from .errors import StorageError
from .experience import ExperienceStore, q_step_vector
from .rewards import RewardVector


@dataclass(frozen=True)
class UsageLink:
    """Which experiences were injected for one turn. Immutable once recorded."""

    session_id: int
    turn_index: int
    used_ids: tuple[int, ...]


@dataclass(frozen=True)
class CreditEntry:
    id: int
    q_before: tuple[float, ...]
    q_after: tuple[float, ...]


@dataclass(frozen=True)
class CreditReport:
    turn_index: int
    alpha: float
    confidence: float
    r: tuple[int, ...]
    entries: tuple[CreditEntry, ...]


def apply_credit(
    store: ExperienceStore, link: UsageLink, r: RewardVector, config: KernelConfig
) -> CreditReport:
    """Credit every record in the usage set, all or none."""
    results = store.credit_update(
        link.used_ids, link.turn_index, config.alpha, r.confidence, r.dims
    )
    entries = tuple(
        CreditEntry(id=i, q_before=tuple(qb), q_after=tuple(qa)) for i, qb, qa in results
    )
    return CreditReport(
        turn_index=link.turn_index,
        alpha=config.alpha,
        confidence=r.confidence,
        r=r.dims,
        entries=entries,
    )


def replay_q(log_entries: list[dict], record_id: int) -> list[float]:
    """Recompute a record's Q by folding its logged history from creation.

    The log must include the record's insert (or replace) entries and every
    credit entry since; a log that starts mid-history cannot be folded and
    raises StorageError.
    """
    q = None
    for entry in log_entries:
        op = entry.get("op")
        if op == "insert" and int(entry["record"]["id"]) == record_id:
            q = [float(v) for v in entry["record"]["q_values"]]
        elif op == "credit" and int(entry["id"]) == record_id:
            if q is None:
                raise StorageError(
                    f"credit entry for record {record_id} precedes its creation; log truncated"
                )
            q = q_step_vector(q, tuple(entry["r"]), float(entry["alpha"]), float(entry["c"]))
    if q is None:
        raise StorageError(f"no creation entry for record {record_id} in log; log truncated")
    return q
