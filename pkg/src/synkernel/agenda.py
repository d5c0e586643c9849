"""Durable agenda items: deferred work that fires into real sessions.

An item carries a trigger (a wall-clock instant on the logical clock, or a
named event), an action spec, and a delivery destination. Firing is never
hidden scheduler bookkeeping: each firing creates a first-class session
seeded with the action spec, and when that session completes, the result is
delivered to the home surface, to a chosen session, or kept silently on the
item.

Recurring items re-arm by scheduling a successor item one interval later, so
every fired item maps to exactly one session. Time is injected as a logical
clock; nothing in this module reads wall time.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

from .clock import LogicalClock
from .errors import NotFoundError, ValidationError
from .eventlog import EventLog

SCHEDULED = "scheduled"
FIRED = "fired"
COMPLETED = "completed"
CANCELLED = "cancelled"


def _check_delivery(delivery: str) -> None:
    if delivery in ("home", "silent") or (
        delivery.startswith("session:") and delivery.split(":", 1)[1].isdigit()
    ):
        return
    raise ValidationError("delivery", f"unknown delivery {delivery!r}; use home, session:<id>, silent")


@dataclass
class AgendaItem:
    id: int
    trigger: dict  # {"kind": "wallclock", "fire_at": int} | {"kind": "event", "key": str}
    action_spec: str
    delivery: str = "home"
    state: str = SCHEDULED
    recurring: int | None = None
    auto_complete: bool = False
    session_id: int | None = None
    fired_at: int | None = None
    result: str = ""
    result_status: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "trigger": dict(self.trigger),
            "action_spec": self.action_spec,
            "delivery": self.delivery,
            "state": self.state,
            "recurring": self.recurring,
            "auto_complete": self.auto_complete,
            "session_id": self.session_id,
            "fired_at": self.fired_at,
            "result": self.result,
            "result_status": self.result_status,
        }


class AgendaScheduler:
    """Owner of agenda items; shares the kernel's logical clock.

    `session_factory(action_spec, item_id) -> session_id` creates the firing
    session; `complete_cb(session_id)` immediately completes it for items
    marked auto_complete; `send(sender, target, payload)` is the mailbox.
    """

    def __init__(
        self,
        clock: LogicalClock,
        session_factory,
        complete_cb=None,
        send=None,
        log_path: Path | str | None = None,
    ):
        self.clock = clock
        self.session_factory = session_factory
        self.complete_cb = complete_cb
        self.send = send
        self._items: dict[int, AgendaItem] = {}
        self._by_session: dict[int, int] = {}
        self._next_id = 1
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

    # -- scheduling -----------------------------------------------------------

    def schedule(
        self,
        trigger: dict,
        action_spec: str,
        delivery: str = "home",
        recurring: int | None = None,
        auto_complete: bool = False,
    ) -> int:
        if not action_spec:
            raise ValidationError("action_spec", "must be non-empty")
        _check_delivery(delivery)
        if recurring is not None and recurring < 1:
            raise ValidationError("recurring", f"interval must be >= 1, got {recurring}")
        kind = trigger.get("kind")
        if kind == "wallclock":
            if int(trigger["fire_at"]) < self.clock.now:
                raise ValidationError(
                    "fire_at", f"{trigger['fire_at']} is in the past (now = {self.clock.now})"
                )
            trig = {"kind": "wallclock", "fire_at": int(trigger["fire_at"])}
        elif kind == "event":
            if not trigger.get("key"):
                raise ValidationError("event_key", "must be non-empty")
            trig = {"kind": "event", "key": trigger["key"]}
        else:
            raise ValidationError("trigger", f"unknown trigger kind {kind!r}")
        item_id = self._next_id
        self._emit(
            {
                "op": "schedule",
                "item": {
                    "id": item_id,
                    "trigger": trig,
                    "action_spec": action_spec,
                    "delivery": delivery,
                    "recurring": recurring,
                    "auto_complete": auto_complete,
                },
            }
        )
        return item_id

    def _apply_schedule(self, e: dict) -> None:
        d = e["item"]
        item = AgendaItem(
            id=d["id"],
            trigger=dict(d["trigger"]),
            action_spec=d["action_spec"],
            delivery=d["delivery"],
            recurring=d.get("recurring"),
            auto_complete=bool(d.get("auto_complete")),
        )
        self._items[item.id] = item
        self._next_id = max(self._next_id, item.id + 1)

    def cancel(self, item_id: int) -> None:
        item = self._items.get(item_id)
        if item is None:
            raise NotFoundError(f"agenda item {item_id} not found")
        if item.state != SCHEDULED:
            raise ValidationError("state", f"cannot cancel item {item_id} in state {item.state}")
        self._emit({"op": "cancel", "id": item_id})

    def _apply_cancel(self, e: dict) -> None:
        self._items[e["id"]].state = CANCELLED

    # -- firing ---------------------------------------------------------------

    def tick(self, to_ts: int | None = None) -> list[int]:
        """Advance the clock and fire everything due, overdue items first."""
        if to_ts is not None:
            if to_ts < self.clock.now:
                raise ValidationError("to", f"cannot tick backwards to {to_ts} (now = {self.clock.now})")
            self._emit({"op": "advance", "now": to_ts})
        fired = []
        while True:
            due = sorted(
                (
                    i
                    for i in self._items.values()
                    if i.state == SCHEDULED
                    and i.trigger["kind"] == "wallclock"
                    and i.trigger["fire_at"] <= self.clock.now
                ),
                key=lambda i: (i.trigger["fire_at"], i.id),
            )
            if not due:
                return fired
            for item in due:
                fired.append(self._fire(item))

    def _apply_advance(self, e: dict) -> None:
        if e["now"] > self.clock.now:
            self.clock.advance_to(e["now"])

    def raise_event(self, event_key: str) -> list[int]:
        """Fire every scheduled item waiting on this event key."""
        matching = sorted(
            (
                i
                for i in self._items.values()
                if i.state == SCHEDULED
                and i.trigger["kind"] == "event"
                and i.trigger["key"] == event_key
            ),
            key=lambda i: i.id,
        )
        return [self._fire(item) for item in matching]

    def _fire(self, item: AgendaItem) -> int:
        session_id = self.session_factory(item.action_spec, item.id)
        self._emit({"op": "fire", "id": item.id, "session": session_id, "at": self.clock.now})
        if item.recurring is not None:
            succ = {
                "id": self._next_id,
                "trigger": dict(item.trigger),
                "action_spec": item.action_spec,
                "delivery": item.delivery,
                "recurring": item.recurring,
                "auto_complete": item.auto_complete,
            }
            if item.trigger["kind"] == "wallclock":
                succ["trigger"]["fire_at"] = item.trigger["fire_at"] + item.recurring
            self._emit({"op": "schedule", "item": succ})
        if item.auto_complete and self.complete_cb is not None:
            self.complete_cb(session_id)
        return item.id

    def _apply_fire(self, e: dict) -> None:
        item = self._items[e["id"]]
        item.state = FIRED
        item.session_id = e["session"]
        item.fired_at = e["at"]
        self._by_session[e["session"]] = item.id

    # -- completion routing -----------------------------------------------------

    def on_session_completed(self, session_id: int, ok: bool, result: str) -> None:
        """Session-kernel completion listener: close the loop on fired items."""
        item_id = self._by_session.get(session_id)
        if item_id is None:
            return
        item = self._items[item_id]
        if item.state != FIRED:
            return
        status = "ok" if ok else "failed"
        self._emit({"op": "done", "id": item_id, "status": status, "result": result})
        if item.delivery != "silent" and self.send is not None:
            word = "completed" if ok else "failed"
            self.send(
                f"agenda:{item_id}",
                item.delivery if item.delivery != "home" else "home",
                f"agenda item {item_id} {word}: {result or item.action_spec}",
            )

    def _apply_done(self, e: dict) -> None:
        item = self._items[e["id"]]
        item.state = COMPLETED
        item.result_status = e["status"]
        item.result = e["result"]

    # -- views ------------------------------------------------------------------

    def get_item(self, item_id: int) -> AgendaItem:
        item = self._items.get(item_id)
        if item is None:
            raise NotFoundError(f"agenda item {item_id} not found")
        return copy.deepcopy(item)

    def items(self) -> list[AgendaItem]:
        return [copy.deepcopy(i) for i in self._items.values()]


ANIMA_WAKE_SPEC = {
    "trigger_kind": "wallclock",
    "action_spec": "periodic self-wake; no queued work",
    "delivery": "silent",
    "auto_complete": True,
}
"""Configuration skeleton for a periodic background wake item.

Shipped as configuration only: installing it exercises the recurring-fire
pathway without prescribing what the woken session does.
"""


def install_anima_wake(scheduler: AgendaScheduler, interval: int, first_at: int | None = None) -> int:
    at = scheduler.clock.now + interval if first_at is None else first_at
    return scheduler.schedule(
        trigger={"kind": "wallclock", "fire_at": at},
        action_spec=ANIMA_WAKE_SPEC["action_spec"],
        delivery=ANIMA_WAKE_SPEC["delivery"],
        recurring=interval,
        auto_complete=ANIMA_WAKE_SPEC["auto_complete"],
    )
