"""The kernel facade: one object wiring every subsystem together.

A SynKernel owns the logical clock, the experience store, the session
kernel, the agenda, and identity memory, and exposes the full learning loop:
record a turn, recall experiences into it, collect the reward window, judge,
credit the used experiences, and encode the episode back into the store.

With a data directory the kernel is durable: each subsystem keeps its own
append-only log under the directory, and reopening replays them. Without one
everything runs in memory, which is what the simulation harness uses.
"""

from __future__ import annotations

import os
import uuid
from pathlib import Path

import numpy as np

from .agenda import AgendaScheduler
from .bundle import ImportReport, export_bundle, import_bundle
from .clock import LogicalClock
from .config import KernelConfig, load_config
from .credit import CreditReport, UsageLink, apply_credit
from .errors import StorageError, ValidationError
from .experience import ExperienceDraft, ExperienceStore, InsertOutcome
from .memory import IdentityMemory
from .retrieval import recall as _recall
from .rewards import InteractionTurn, RewardJudge, RewardVector, collect_window, judge_turn
from .sessions import ACTIVE, SessionKernel
from .similarity import SimilarityProvider, TrigramSimilarity

DATA_VERSION = "1"

CONFIG_FILE = "config"
VERSION_FILE = "VERSION"
KERNEL_ID_FILE = "kernel_id"
CLOCK_FILE = "clock"
LOCK_FILE = "lock"
EXPERIENCE_LOG = "experience.log"
EXPERIENCE_SNAPSHOT = "experience.snapshot"
SESSIONS_LOG = "sessions.log"
AGENDA_LOG = "agenda.log"
MEMORY_LOG = "memory.log"
BUNDLES_DIR = "bundles"


def init_data_dir(root: Path) -> None:
    """Create the directory layout atomically on first run.

    The skeleton is staged in a sibling temp dir and renamed into place, so a
    crash mid-creation never leaves a half-initialized directory. An existing
    non-empty directory must carry the version stamp.
    """
    root = Path(root)
    if root.exists() and any(root.iterdir()):
        stamp = root / VERSION_FILE
        if not stamp.exists():
            raise StorageError(f"{root} exists but is not a kernel data directory")
        if stamp.read_text(encoding="utf-8").strip() != DATA_VERSION:
            raise StorageError(f"{root}: unsupported data directory version")
        return
    staging = root.parent / f".{root.name}.init-{os.getpid()}"
    staging.mkdir(parents=True, exist_ok=True)
    (staging / VERSION_FILE).write_text(DATA_VERSION + "\n", encoding="utf-8")
    (staging / KERNEL_ID_FILE).write_text(uuid.uuid4().hex + "\n", encoding="utf-8")
    (staging / BUNDLES_DIR).mkdir(exist_ok=True)
    root.parent.mkdir(parents=True, exist_ok=True)
    try:
        os.rename(staging, root)
    except OSError:
        # Lost the race or the empty dir vanished; if someone else won, fine.
        if not (root / VERSION_FILE).exists():
            raise


class SynKernel:
    def __init__(
        self,
        config: KernelConfig | None = None,
        data_dir: Path | str | None = None,
        provider: SimilarityProvider | None = None,
        kernel_id: str | None = None,
    ):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            init_data_dir(self.data_dir)
            if config is None:
                config = load_config(self.data_dir / CONFIG_FILE)
            stored_id = (self.data_dir / KERNEL_ID_FILE).read_text(encoding="utf-8").strip()
            kernel_id = kernel_id or stored_id
        self.config = config if config is not None else KernelConfig()
        self.kernel_id = kernel_id or f"ephemeral-{self.config.rng_seed}"
        self.provider = provider if provider is not None else TrigramSimilarity()
        self.clock = LogicalClock()
        self.rng = np.random.default_rng(self.config.rng_seed)

        def p(name: str) -> Path | None:
            return self.data_dir / name if self.data_dir is not None else None

        self.identity = IdentityMemory(self.clock, log_path=p(MEMORY_LOG), provider=self.provider)
        self.sessions = SessionKernel(
            self.clock,
            log_path=p(SESSIONS_LOG),
            contact_resolver=self.identity.contact_resolve,
            mailbox_retries=self.config.mailbox_retries,
        )
        self.store = ExperienceStore(
            self.provider,
            self.clock,
            log_path=p(EXPERIENCE_LOG),
            snapshot_path=p(EXPERIENCE_SNAPSHOT),
        )
        self.agenda = AgendaScheduler(
            self.clock,
            session_factory=self._agenda_session,
            complete_cb=self._agenda_autocomplete,
            send=self.sessions.mailbox_send,
            log_path=p(AGENDA_LOG),
        )
        self.sessions.completion_listeners.append(self.agenda.on_session_completed)
        self._restore_clock()

    # -- durability helpers ----------------------------------------------------

    @property
    def lock_path(self) -> Path | None:
        return self.data_dir / LOCK_FILE if self.data_dir is not None else None

    def _restore_clock(self) -> None:
        if self.data_dir is None:
            return
        path = self.data_dir / CLOCK_FILE
        if path.exists():
            stored = int(path.read_text(encoding="utf-8").strip() or 0)
            if stored > self.clock.now:
                self.clock.advance_to(stored)

    def save(self) -> None:
        """Persist the clock; logs are already durable per operation."""
        if self.data_dir is None:
            return
        tmp = self.data_dir / (CLOCK_FILE + ".tmp")
        tmp.write_text(str(self.clock.now) + "\n", encoding="utf-8")
        os.replace(tmp, self.data_dir / CLOCK_FILE)

    close = save

    # -- agenda wiring ----------------------------------------------------------

    def _agenda_session(self, action_spec: str, item_id: int) -> int:
        return self.sessions.create_session(
            scope="agenda", seed_turn=action_spec, agenda_item=item_id
        ).id

    def _agenda_autocomplete(self, session_id: int) -> None:
        self.sessions.complete_session(session_id, result="auto-completed wake")

    # -- the learning loop --------------------------------------------------------

    def recall(
        self,
        query: str,
        k: int | None = None,
        session_id: int | None = None,
        turn_index: int | None = None,
    ) -> list[dict]:
        """Retrieve experiences for a query; with a turn, record the usage set.

        A turn gets exactly one usage set: a second recall against the same
        (session, turn) is rejected before any state changes.
        """
        if (session_id is None) != (turn_index is None):
            raise ValidationError("turn", "session_id and turn_index go together")
        if session_id is not None:
            self.sessions.session_view(session_id).turn(turn_index)
            if self.sessions.usage_for(session_id, turn_index) is not None:
                raise ValidationError(
                    "turn", f"turn {turn_index} of session {session_id} already has a usage set"
                )
        payload = _recall(self.store, query, self.config, self.rng, now=self.clock.now, k=k)
        if session_id is not None:
            self.sessions.record_usage(session_id, turn_index, [p["id"] for p in payload])
        return payload

    def window_ready(self, session_id: int, turn_index: int) -> bool:
        """A turn may be judged once its window is full or its session closed."""
        sess = self.sessions.session_view(session_id)
        window = collect_window(sess, turn_index, self.config)
        return window.h_used >= self.config.window_h or sess.state != ACTIVE

    def apply_reward(
        self, session_id: int, turn_index: int, judge: RewardJudge, force: bool = False
    ) -> tuple[RewardVector, CreditReport]:
        """Judge a turn and credit every experience in its usage set."""
        sess = self.sessions.session_view(session_id)
        turn_entry = sess.turn(turn_index)
        if self.sessions.is_rewarded(session_id, turn_index):
            raise ValidationError(
                "turn", f"turn {turn_index} of session {session_id} already rewarded"
            )
        if not force and not self.window_ready(session_id, turn_index):
            raise ValidationError(
                "window",
                f"turn {turn_index} window has not filled and session {session_id} is open; "
                "pass force to judge early",
            )
        window = collect_window(sess, turn_index, self.config)
        turn = InteractionTurn(
            turn_index=turn_index,
            user_request=turn_entry["request"],
            action_trajectory=turn_entry["action"],
            session_id=session_id,
        )
        vector = judge_turn(judge, turn, window)
        used = self.sessions.usage_for(session_id, turn_index) or ()
        link = UsageLink(session_id=session_id, turn_index=turn_index, used_ids=tuple(used))
        report = apply_credit(self.store, link, vector, self.config)
        self.sessions.mark_rewarded(session_id, turn_index)
        return vector, report

    def encode_experience(
        self,
        intent: str,
        script: str,
        digest: str,
        source_model: str = "",
        used_ids=(),
        reward: RewardVector | None = None,
    ) -> InsertOutcome:
        """Distill an episode into the store.

        Initial values follow config.seed_q: the episode's own reward when
        available and seeding is own_reward, otherwise zeros.
        """
        q_init = None
        if self.config.seed_q == "own_reward" and reward is not None:
            q_init = tuple(float(v) for v in reward.dims)
        draft = ExperienceDraft(
            intent=intent,
            script=script,
            digest=digest,
            source_model=source_model,
            used_experience_ids=tuple(int(i) for i in used_ids),
            q_init=q_init,
        )
        return self.store.insert(draft, self.config)

    # -- bundles ---------------------------------------------------------------

    def export_bundle(self, path: Path | str, predicate=None) -> Path:
        return export_bundle(self.store, path, self.kernel_id, predicate)

    def import_bundle(self, path: Path | str, reset_visits: bool = False) -> ImportReport:
        return import_bundle(self.store, path, self.config, reset_visits=reset_visits)
