"""Exception hierarchy shared by all kernel subsystems."""

from __future__ import annotations


class KernelError(Exception):
    """Base class for domain errors. CLI maps these to exit code 1."""

    exit_code = 1


class ValidationError(KernelError):
    """A value violated a declared range or shape constraint.

    ``field`` names the offending configuration key or record field so that
    callers (and the CLI) can point at it directly.
    """

    def __init__(self, field: str | None, message: str):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}")


class NotFoundError(KernelError):
    """Lookup by id or name found nothing."""


class JudgeError(KernelError):
    """A reward judge failed or returned an out-of-range reward."""

    def __init__(self, judge_id: str, message: str):
        self.judge_id = judge_id
        super().__init__(f"judge '{judge_id}': {message}")


class CycleError(KernelError):
    """A DAG mutation would introduce a cycle. ``edge`` is (dep, node)."""

    def __init__(self, edge: tuple[str, str]):
        self.edge = edge
        super().__init__(f"edge ({edge[0]}, {edge[1]}) would create a cycle")


class ChecksumError(KernelError):
    """Bundle checksum or format version did not verify."""


class StorageError(KernelError):
    """Persistence layer failure; the in-memory state was left unchanged."""


class LockError(KernelError):
    """Another process holds the data directory's writer lock."""
