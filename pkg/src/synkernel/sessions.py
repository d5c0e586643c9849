"""Sessions, session-local plan DAGs, and the mailbox.

A session is the execution capsule: scope-attached, optionally parented to
the session that spawned it, carrying a transcript of turns and messages
plus continuity texts (title, summary, snapshot). Parent links form a
forest. Each session owns a private plan DAG whose nodes move through
blocked, ready, running, done, failed; completing a node auto-promotes every
newly unblocked node.

Inter-session communication goes through the mailbox, never through shared
state. Targets are a session, the home surface, or a named contact. Delivery
is exactly-once per inbox: polling returns pending messages in per-sender
FIFO order and marks them delivered. Messages aimed at missing or closed
sessions are retried a configurable number of times (each mailbox operation
is a retry opportunity) and then dead-lettered with a reason.

All mutations are event-logged write-ahead; replaying the log rebuilds state
without re-firing side effects, because every side effect logged its own
entry when it happened live.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .clock import LogicalClock
from .errors import CycleError, NotFoundError, ValidationError
from .eventlog import EventLog, canonical_json

ACTIVE = "active"
COMPLETED = "completed"
FAILED = "failed"

NODE_STATUSES = ("blocked", "ready", "running", "done", "failed")


def parse_target(target: str) -> tuple[str, str]:
    """Split a mailbox target into (kind, key): home, session:<id>, contact:<name>."""
    if target == "home":
        return ("home", "")
    if target.startswith("session:"):
        ref = target.split(":", 1)[1]
        if not ref.isdigit():
            raise ValidationError("target", f"bad session target {target!r}")
        return ("session", ref)
    if target.startswith("contact:"):
        name = target.split(":", 1)[1]
        if not name:
            raise ValidationError("target", "contact target needs a name")
        return ("contact", name)
    raise ValidationError("target", f"unknown target {target!r}; use home, session:<id>, contact:<name>")


@dataclass
class DagNode:
    node_id: str
    label: str = ""
    status: str = "blocked"
    deps: set[str] = field(default_factory=set)
    auto_complete_child: int | None = None


@dataclass
class MailboxMessage:
    id: int
    sender: str
    target: str
    payload: str
    enqueued_at: int
    delivery_state: str = "pending"  # pending | delivered | dead
    attempts: int = 0
    reason: str = ""
    delivered_at: int | None = None


@dataclass
class SessionRecord:
    """Execution capsule: transcript, continuity texts, plan DAG."""

    id: int
    scope: str
    parent_id: int | None = None
    state: str = ACTIVE
    title: str = ""
    summary: str = ""
    snapshot: str = ""
    created_at: int = 0
    transcript: list[dict] = field(default_factory=list)
    children: list[int] = field(default_factory=list)
    turn_count: int = 0
    turn_positions: dict[int, int] = field(default_factory=dict)
    nodes: dict[str, DagNode] = field(default_factory=dict)
    result: str = ""
    # completion routing, set at spawn time
    notify_parent: bool = False
    dag_node: str | None = None
    agenda_item: int | None = None

    def _append_turn(self, turn_index: int, request: str, action: str) -> None:
        self.turn_positions[turn_index] = len(self.transcript)
        self.transcript.append(
            {"kind": "turn", "turn_index": turn_index, "request": request, "action": action}
        )
        self.turn_count = max(self.turn_count, turn_index + 1)

    def entries_after_turn(self, turn_index: int, limit: int | None = None) -> list[str]:
        """Primary texts of transcript entries strictly after the turn."""
        pos = self.turn_positions.get(turn_index)
        if pos is None:
            raise NotFoundError(f"turn {turn_index} not found in session {self.id}")
        tail = self.transcript[pos + 1 :]
        if limit is not None:
            tail = tail[:limit]
        return [e["request"] if e["kind"] == "turn" else e["text"] for e in tail]

    def turn(self, turn_index: int) -> dict:
        pos = self.turn_positions.get(turn_index)
        if pos is None:
            raise NotFoundError(f"turn {turn_index} not found in session {self.id}")
        return dict(self.transcript[pos])


class SessionKernel:
    """Event-serialized owner of sessions, DAGs, and the mailbox."""

    def __init__(
        self,
        clock: LogicalClock | None = None,
        log_path: Path | str | None = None,
        contact_resolver=None,
        mailbox_retries: int = 0,
    ):
        self.clock = clock if clock is not None else LogicalClock()
        self.contact_resolver = contact_resolver
        self.mailbox_retries = mailbox_retries
        self._sessions: dict[int, SessionRecord] = {}
        self._messages: dict[int, MailboxMessage] = {}
        self._pending: dict[str, list[int]] = {}
        self._usage: dict[tuple[int, int], tuple[int, ...]] = {}
        self._rewarded: set[tuple[int, int]] = set()
        self._next_session_id = 1
        self._next_msg_id = 1
        self._last_promoted: list[str] = []
        self.completion_listeners: list = []
        self._replaying = False
        self._log = EventLog(log_path) if log_path is not None else None
        if self._log is not None and self._log.exists():
            self._replaying = True
            try:
                for entry in self._log.read_all():
                    self._apply(entry)
            finally:
                self._replaying = False

    # -- event plumbing -----------------------------------------------------

    def _emit(self, entry: dict) -> None:
        if self._log is not None:
            self._log.append(entry)
        self._apply(entry)

    def _apply(self, entry: dict) -> None:
        getattr(self, "_apply_" + entry["op"])(entry)

    # -- sessions -----------------------------------------------------------

    def create_session(
        self,
        scope: str,
        parent_id: int | None = None,
        seed_turn: str | None = None,
        notify_parent: bool = False,
        dag_node: str | None = None,
        agenda_item: int | None = None,
    ) -> SessionRecord:
        if not scope:
            raise ValidationError("scope", "must be non-empty")
        if parent_id is not None and parent_id not in self._sessions:
            raise NotFoundError(f"parent session {parent_id} not found")
        sid = self._next_session_id
        self._emit(
            {
                "op": "session_new",
                "id": sid,
                "scope": scope,
                "parent": parent_id,
                "created_at": self.clock.now,
                "seed_turn": seed_turn,
                "notify_parent": notify_parent,
                "dag_node": dag_node,
                "agenda_item": agenda_item,
            }
        )
        return copy.deepcopy(self._sessions[sid])

    def _apply_session_new(self, e: dict) -> None:
        rec = SessionRecord(
            id=e["id"],
            scope=e["scope"],
            parent_id=e["parent"],
            created_at=e["created_at"],
            notify_parent=bool(e.get("notify_parent")),
            dag_node=e.get("dag_node"),
            agenda_item=e.get("agenda_item"),
        )
        self._sessions[rec.id] = rec
        self._next_session_id = max(self._next_session_id, rec.id + 1)
        if rec.parent_id is not None:
            self._sessions[rec.parent_id].children.append(rec.id)
        if e.get("seed_turn"):
            rec._append_turn(0, e["seed_turn"], "")

    def _active(self, session_id: int) -> SessionRecord:
        rec = self._sessions.get(session_id)
        if rec is None:
            raise NotFoundError(f"session {session_id} not found")
        if rec.state != ACTIVE:
            raise ValidationError("state", f"session {session_id} is {rec.state}, not active")
        return rec

    def session_view(self, session_id: int) -> SessionRecord:
        """Internal read-only view. Callers outside the kernel use get_session."""
        rec = self._sessions.get(session_id)
        if rec is None:
            raise NotFoundError(f"session {session_id} not found")
        return rec

    def get_session(self, session_id: int) -> SessionRecord:
        return copy.deepcopy(self.session_view(session_id))

    def list_sessions(self) -> list[SessionRecord]:
        return [copy.deepcopy(s) for s in self._sessions.values()]

    def record_turn(self, session_id: int, user_request: str, action_trajectory: str = "") -> int:
        rec = self._active(session_id)
        t = rec.turn_count
        self._emit(
            {
                "op": "turn",
                "session": session_id,
                "turn_index": t,
                "request": user_request,
                "action": action_trajectory,
            }
        )
        return t

    def _apply_turn(self, e: dict) -> None:
        self._sessions[e["session"]]._append_turn(e["turn_index"], e["request"], e["action"])

    def post_message(self, session_id: int, text: str, sender: str | None = None) -> None:
        self._active(session_id)
        self._emit({"op": "message", "session": session_id, "text": text, "sender": sender})

    def _apply_message(self, e: dict) -> None:
        self._sessions[e["session"]].transcript.append(
            {"kind": "message", "text": e["text"], "sender": e.get("sender")}
        )

    def set_text(self, session_id: int, which: str, text: str) -> None:
        if which not in ("title", "summary", "snapshot"):
            raise ValidationError("field", f"no session text field {which!r}")
        self.session_view(session_id)
        self._emit({"op": "meta_text", "session": session_id, "field": which, "text": text})

    def _apply_meta_text(self, e: dict) -> None:
        setattr(self._sessions[e["session"]], e["field"], e["text"])

    def complete_session(self, session_id: int, result: str = "") -> None:
        rec = self._active(session_id)
        self._emit({"op": "complete", "session": session_id, "result": result})
        self._after_close(rec, ok=True, result=result)

    def fail_session(self, session_id: int, reason: str = "") -> None:
        rec = self._active(session_id)
        self._emit({"op": "fail", "session": session_id, "reason": reason})
        self._after_close(rec, ok=False, result=reason)

    def _apply_complete(self, e: dict) -> None:
        rec = self._sessions[e["session"]]
        rec.state = COMPLETED
        rec.result = e["result"]

    def _apply_fail(self, e: dict) -> None:
        rec = self._sessions[e["session"]]
        rec.state = FAILED
        rec.result = e["reason"]

    def _after_close(self, rec: SessionRecord, ok: bool, result: str) -> None:
        """Completion routing. Live only; every effect logs its own entry."""
        if rec.notify_parent and rec.parent_id is not None:
            word = "completed" if ok else "failed"
            self.mailbox_send(
                sender=f"session:{rec.id}",
                target=f"session:{rec.parent_id}",
                payload=f"child {rec.id} {word}: {result}",
            )
        if rec.dag_node is not None and rec.parent_id is not None:
            parent = self._sessions.get(rec.parent_id)
            if parent is not None and rec.dag_node in parent.nodes:
                node = parent.nodes[rec.dag_node]
                if node.status == "running":
                    if ok:
                        self.dag_complete_node(rec.parent_id, rec.dag_node)
                    else:
                        self.dag_fail_node(rec.parent_id, rec.dag_node)
        for listener in self.completion_listeners:
            listener(rec.id, ok, result)

    def spawn_child_task(self, parent_id: int, task_spec: str, dag_node: str | None = None) -> int:
        """Delegate a task to a fresh child session.

        The child's transcript is seeded with the task spec; on completion a
        message is routed back to the parent, and the linked DAG node, if
        any, auto-completes. The node must exist and must not already be
        finished or claimed.
        """
        parent = self._active(parent_id)
        if dag_node is not None:
            node = parent.nodes.get(dag_node)
            if node is None:
                raise NotFoundError(f"node {dag_node!r} not in session {parent_id} plan")
            if node.status in ("done", "failed"):
                raise ValidationError("dag_node", f"node {dag_node!r} is already {node.status}")
            if node.status == "running":
                raise ValidationError("dag_node", f"node {dag_node!r} already has a worker")
        child = self.create_session(
            scope=parent.scope,
            parent_id=parent_id,
            seed_turn=task_spec,
            notify_parent=True,
            dag_node=dag_node,
        )
        if dag_node is not None:
            self._emit({"op": "dag_running", "session": parent_id, "node": dag_node, "child": child.id})
        return child.id

    def _apply_dag_running(self, e: dict) -> None:
        node = self._sessions[e["session"]].nodes[e["node"]]
        node.status = "running"
        node.auto_complete_child = e.get("child")

    # -- plan DAG -----------------------------------------------------------

    def dag_nodes(self, session_id: int) -> dict[str, DagNode]:
        return copy.deepcopy(self.session_view(session_id).nodes)

    def _promote(self, rec: SessionRecord) -> list[str]:
        """Mark every blocked node with all deps done as ready."""
        promoted = []
        for node in rec.nodes.values():
            if node.status == "blocked" and all(
                rec.nodes[d].status == "done" for d in node.deps
            ):
                node.status = "ready"
                promoted.append(node.node_id)
        return sorted(promoted)

    def dag_add_node(
        self, session_id: int, node_id: str, label: str = "", deps=()
    ) -> list[str]:
        rec = self._active(session_id)
        if not node_id:
            raise ValidationError("node", "node id must be non-empty")
        if node_id in rec.nodes:
            raise ValidationError("node", f"node {node_id!r} already exists")
        deps = list(deps)
        for d in deps:
            if d not in rec.nodes:
                raise NotFoundError(f"dependency {d!r} not in session {session_id} plan")
        self._emit(
            {"op": "dag_node", "session": session_id, "node": node_id, "label": label, "deps": deps}
        )
        node = self._sessions[session_id].nodes[node_id]
        return [node_id] if node.status == "ready" else []

    def _apply_dag_node(self, e: dict) -> None:
        rec = self._sessions[e["session"]]
        node = DagNode(node_id=e["node"], label=e["label"], deps=set(e["deps"]))
        rec.nodes[node.node_id] = node
        if all(rec.nodes[d].status == "done" for d in node.deps):
            node.status = "ready"

    def dag_add_edge(self, session_id: int, dep: str, node: str) -> list[str]:
        """Make `node` depend on `dep`; rejected if that closes a cycle."""
        rec = self._active(session_id)
        for name in (dep, node):
            if name not in rec.nodes:
                raise NotFoundError(f"node {name!r} not in session {session_id} plan")
        if dep == node or self._depends_on(rec, dep, node):
            raise CycleError((dep, node))
        if rec.nodes[node].status in ("done", "failed"):
            raise ValidationError("node", f"node {node!r} is already {rec.nodes[node].status}")
        self._emit({"op": "dag_edge", "session": session_id, "dep": dep, "node": node})
        return []

    def _depends_on(self, rec: SessionRecord, a: str, b: str) -> bool:
        """True if a transitively depends on b."""
        stack = [a]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur == b:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(rec.nodes[cur].deps)
        return False

    def _apply_dag_edge(self, e: dict) -> None:
        rec = self._sessions[e["session"]]
        node = rec.nodes[e["node"]]
        node.deps.add(e["dep"])
        if node.status == "ready" and rec.nodes[e["dep"]].status != "done":
            node.status = "blocked"

    def dag_complete_node(self, session_id: int, node_id: str) -> list[str]:
        rec = self.session_view(session_id)
        node = rec.nodes.get(node_id)
        if node is None:
            raise NotFoundError(f"node {node_id!r} not in session {session_id} plan")
        if node.status not in ("ready", "running"):
            raise ValidationError("node", f"cannot complete node {node_id!r} in status {node.status}")
        self._emit({"op": "dag_done", "session": session_id, "node": node_id})
        return self._last_promoted

    def _apply_dag_done(self, e: dict) -> None:
        rec = self._sessions[e["session"]]
        rec.nodes[e["node"]].status = "done"
        self._last_promoted = self._promote(rec)

    def dag_fail_node(self, session_id: int, node_id: str) -> list[str]:
        rec = self.session_view(session_id)
        node = rec.nodes.get(node_id)
        if node is None:
            raise NotFoundError(f"node {node_id!r} not in session {session_id} plan")
        if node.status not in ("ready", "running"):
            raise ValidationError("node", f"cannot fail node {node_id!r} in status {node.status}")
        self._emit({"op": "dag_fail_node", "session": session_id, "node": node_id})
        return []

    def _apply_dag_fail_node(self, e: dict) -> None:
        self._sessions[e["session"]].nodes[e["node"]].status = "failed"

    # -- mailbox ------------------------------------------------------------

    def mailbox_send(self, sender: str, target: str, payload: str) -> MailboxMessage:
        kind, ref = parse_target(target)
        if kind == "contact":
            known = False
            if self.contact_resolver is not None:
                try:
                    self.contact_resolver(ref)
                    known = True
                except NotFoundError:
                    known = False
            if not known:
                mid = self._next_msg_id
                self._emit(
                    {
                        "op": "mbx_send",
                        "id": mid,
                        "sender": sender,
                        "target": target,
                        "payload": payload,
                        "at": self.clock.now,
                    }
                )
                self._emit({"op": "mbx_dead", "id": mid, "reason": "unregistered contact"})
                return copy.deepcopy(self._messages[mid])
        mid = self._next_msg_id
        self._emit(
            {
                "op": "mbx_send",
                "id": mid,
                "sender": sender,
                "target": target,
                "payload": payload,
                "at": self.clock.now,
            }
        )
        self.mailbox_sweep()
        return copy.deepcopy(self._messages[mid])

    def _apply_mbx_send(self, e: dict) -> None:
        msg = MailboxMessage(
            id=e["id"],
            sender=e["sender"],
            target=e["target"],
            payload=e["payload"],
            enqueued_at=e["at"],
        )
        self._messages[msg.id] = msg
        self._pending.setdefault(msg.target, []).append(msg.id)
        self._next_msg_id = max(self._next_msg_id, msg.id + 1)

    def mailbox_sweep(self) -> None:
        """Retry accounting for undeliverable session targets.

        Every sweep is one delivery attempt for each pending message whose
        target session is missing or closed; past the retry budget the
        message dead-letters with the reason.
        """
        if self._replaying:
            return
        for msg_id in [m for ids in self._pending.values() for m in ids]:
            msg = self._messages[msg_id]
            kind, ref = parse_target(msg.target)
            if kind != "session":
                continue
            sess = self._sessions.get(int(ref))
            reason = None
            if sess is None:
                reason = "missing"
            elif sess.state != ACTIVE:
                reason = "closed"
            if reason is None:
                continue
            self._emit({"op": "mbx_attempt", "id": msg_id})
            if msg.attempts > self.mailbox_retries:
                self._emit({"op": "mbx_dead", "id": msg_id, "reason": reason})

    def _apply_mbx_attempt(self, e: dict) -> None:
        self._messages[e["id"]].attempts += 1

    def _apply_mbx_dead(self, e: dict) -> None:
        msg = self._messages[e["id"]]
        msg.delivery_state = "dead"
        msg.reason = e["reason"]
        queue = self._pending.get(msg.target, [])
        if msg.id in queue:
            queue.remove(msg.id)

    def mailbox_poll(self, target: str) -> list[MailboxMessage]:
        """Drain pending messages for a target; each is seen exactly once."""
        parse_target(target)
        self.mailbox_sweep()
        ids = list(self._pending.get(target, []))
        if not ids:
            return []
        self._emit({"op": "mbx_deliver", "ids": ids, "at": self.clock.now})
        return [copy.deepcopy(self._messages[i]) for i in ids]

    def _apply_mbx_deliver(self, e: dict) -> None:
        for i in e["ids"]:
            msg = self._messages[i]
            msg.delivery_state = "delivered"
            msg.delivered_at = e["at"]
            queue = self._pending.get(msg.target, [])
            if i in queue:
                queue.remove(i)

    def dead_letters(self) -> list[MailboxMessage]:
        return [copy.deepcopy(m) for m in self._messages.values() if m.delivery_state == "dead"]

    def messages(self) -> list[MailboxMessage]:
        return [copy.deepcopy(m) for m in self._messages.values()]

    def state_fingerprint(self) -> str:
        """Canonical digest of everything replay must reconstruct."""

        def session_dict(s: SessionRecord) -> dict:
            return {
                "id": s.id,
                "scope": s.scope,
                "parent_id": s.parent_id,
                "state": s.state,
                "title": s.title,
                "summary": s.summary,
                "snapshot": s.snapshot,
                "created_at": s.created_at,
                "transcript": s.transcript,
                "children": s.children,
                "turn_count": s.turn_count,
                "nodes": {
                    k: {
                        "status": n.status,
                        "deps": sorted(n.deps),
                        "label": n.label,
                        "auto_complete_child": n.auto_complete_child,
                    }
                    for k, n in sorted(s.nodes.items())
                },
                "result": s.result,
                "notify_parent": s.notify_parent,
                "dag_node": s.dag_node,
                "agenda_item": s.agenda_item,
            }

        def message_dict(m: MailboxMessage) -> dict:
            return {
                "id": m.id,
                "sender": m.sender,
                "target": m.target,
                "payload": m.payload,
                "enqueued_at": m.enqueued_at,
                "delivery_state": m.delivery_state,
                "attempts": m.attempts,
                "reason": m.reason,
                "delivered_at": m.delivered_at,
            }

        state = {
            "sessions": {str(i): session_dict(s) for i, s in sorted(self._sessions.items())},
            "messages": {str(i): message_dict(m) for i, m in sorted(self._messages.items())},
            "pending": {k: list(v) for k, v in sorted(self._pending.items())},
            "usage": {f"{s}:{t}": list(ids) for (s, t), ids in sorted(self._usage.items())},
            "rewarded": sorted(f"{s}:{t}" for s, t in self._rewarded),
            "next_session_id": self._next_session_id,
            "next_msg_id": self._next_msg_id,
        }
        return hashlib.sha256(canonical_json(state).encode("utf-8")).hexdigest()

    # -- per-turn usage bookkeeping ------------------------------------------

    def record_usage(self, session_id: int, turn_index: int, ids) -> None:
        key = (session_id, turn_index)
        if key in self._usage:
            raise ValidationError(
                "turn", f"turn {turn_index} of session {session_id} already has a usage set"
            )
        self._emit(
            {"op": "usage", "session": session_id, "t": turn_index, "ids": [int(i) for i in ids]}
        )

    def _apply_usage(self, e: dict) -> None:
        self._usage[(e["session"], e["t"])] = tuple(e["ids"])

    def usage_for(self, session_id: int, turn_index: int) -> tuple[int, ...] | None:
        return self._usage.get((session_id, turn_index))

    def mark_rewarded(self, session_id: int, turn_index: int) -> None:
        key = (session_id, turn_index)
        if key in self._rewarded:
            raise ValidationError("turn", f"turn {turn_index} of session {session_id} already rewarded")
        self._emit({"op": "usage_rewarded", "session": session_id, "t": turn_index})

    def _apply_usage_rewarded(self, e: dict) -> None:
        self._rewarded.add((e["session"], e["t"]))

    def is_rewarded(self, session_id: int, turn_index: int) -> bool:
        return (session_id, turn_index) in self._rewarded
