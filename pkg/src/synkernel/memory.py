"""Identity-bearing long-term memory: typed entries, notes, profile, contacts.

This substrate is deliberately separate from the experience store. Behavioral
priors earn their keep through reuse statistics; identity facts do not: who
the user is, what they prefer, who the agent knows. Nothing here reads or
writes experience state, and an architectural test holds that line.

Writing happens only through explicit calls. Extraction policy, what is
worth remembering, belongs to the caller.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

from .clock import LogicalClock
from .errors import NotFoundError, ValidationError
from .eventlog import EventLog
from .similarity import SimilarityProvider

CATEGORIES = (
    "self",
    "user",
    "relationship",
    "preference",
    "asset",
    "insight",
    "knowledge",
    "general",
)


@dataclass
class MemoryEntry:
    id: int
    category: str
    content: str
    created_at: int = 0
    updated_at: int = 0


@dataclass
class Note:
    id: int
    title: str
    body: str
    created_at: int = 0


@dataclass
class Contact:
    name: str
    address: str
    friend: bool = False


@dataclass
class Profile:
    display_name: str = ""
    description: str = ""


class IdentityMemory:
    def __init__(
        self,
        clock: LogicalClock | None = None,
        log_path: Path | str | None = None,
        provider: SimilarityProvider | None = None,
        similarity_threshold: float = 0.6,
    ):
        self.clock = clock if clock is not None else LogicalClock()
        self.provider = provider
        self.similarity_threshold = similarity_threshold
        self._entries: dict[int, MemoryEntry] = {}
        self._notes: dict[int, Note] = {}
        self._contacts: dict[str, Contact] = {}
        self._profile = Profile()
        self._next_entry_id = 1
        self._next_note_id = 1
        self._log = EventLog(log_path) if log_path is not None else None
        if self._log is not None and self._log.exists():
            for entry in self._log.read_all():
                self._apply(entry)

    def _emit(self, entry: dict) -> None:
        if self._log is not None:
            self._log.append(entry)
        self._apply(entry)

    def _apply(self, entry: dict) -> None:
        getattr(self, "_apply_" + entry["op"])(entry)

    # -- typed memory ---------------------------------------------------------

    def memory_put(self, category: str, content: str) -> int:
        if category not in CATEGORIES:
            raise ValidationError("category", f"{category!r} is not one of {CATEGORIES}")
        if not content:
            raise ValidationError("content", "must be non-empty")
        entry_id = self._next_entry_id
        self._emit(
            {
                "op": "mem_put",
                "id": entry_id,
                "category": category,
                "content": content,
                "at": self.clock.now,
            }
        )
        return entry_id

    def _apply_mem_put(self, e: dict) -> None:
        entry = MemoryEntry(
            id=e["id"], category=e["category"], content=e["content"],
            created_at=e["at"], updated_at=e["at"],
        )
        self._entries[entry.id] = entry
        self._next_entry_id = max(self._next_entry_id, entry.id + 1)

    def _matches(self, content: str, text: str) -> bool:
        if text.lower() in content.lower():
            return True
        if self.provider is not None:
            return self.provider.similarity(content, text) >= self.similarity_threshold
        return False

    def memory_query(self, category: str | None = None, text: str | None = None) -> list[MemoryEntry]:
        """Filter by category and/or content match, newest first.

        Text matching is case-insensitive substring; with a similarity
        provider configured, entries close to the query also match.
        """
        if category is not None and category not in CATEGORIES:
            raise ValidationError("category", f"{category!r} is not one of {CATEGORIES}")
        hits = []
        for entry in self._entries.values():
            if category is not None and entry.category != category:
                continue
            if text is not None and not self._matches(entry.content, text):
                continue
            hits.append(entry)
        hits.sort(key=lambda m: (-m.created_at, -m.id))
        return [copy.deepcopy(m) for m in hits]

    # -- contacts ---------------------------------------------------------------

    def contact_upsert(self, name: str, address: str, friend: bool = False) -> None:
        if not name:
            raise ValidationError("name", "must be non-empty")
        if not address:
            raise ValidationError("address", "must be non-empty")
        self._emit({"op": "contact", "name": name, "address": address, "friend": friend})

    def _apply_contact(self, e: dict) -> None:
        self._contacts[e["name"]] = Contact(name=e["name"], address=e["address"], friend=e["friend"])

    def contact_resolve(self, name: str) -> str:
        contact = self._contacts.get(name)
        if contact is None:
            raise NotFoundError(f"contact {name!r} not registered")
        return contact.address

    def contact_list(self) -> list[Contact]:
        return [copy.deepcopy(c) for c in sorted(self._contacts.values(), key=lambda c: c.name)]

    # -- notes and profile --------------------------------------------------------

    def note_add(self, title: str, body: str) -> int:
        if not title:
            raise ValidationError("title", "must be non-empty")
        note_id = self._next_note_id
        self._emit({"op": "note", "id": note_id, "title": title, "body": body, "at": self.clock.now})
        return note_id

    def _apply_note(self, e: dict) -> None:
        self._notes[e["id"]] = Note(id=e["id"], title=e["title"], body=e["body"], created_at=e["at"])
        self._next_note_id = max(self._next_note_id, e["id"] + 1)

    def note_get(self, note_id: int) -> Note:
        note = self._notes.get(note_id)
        if note is None:
            raise NotFoundError(f"note {note_id} not found")
        return copy.deepcopy(note)

    def note_list(self) -> list[Note]:
        return [copy.deepcopy(n) for n in self._notes.values()]

    def set_profile(self, display_name: str, description: str) -> None:
        self._emit({"op": "profile", "display_name": display_name, "description": description})

    def _apply_profile(self, e: dict) -> None:
        self._profile = Profile(display_name=e["display_name"], description=e["description"])

    def get_profile(self) -> Profile:
        return copy.deepcopy(self._profile)
