"""Self-evolving agent runtime kernel.

The kernel turns a stateless language-model policy into a persistent agent:
it stores reusable experiences with learned value estimates, retrieves them
for new tasks, credits them from delayed feedback, runs scope-attached
sessions with plan DAGs and mailboxes, schedules future work on an agenda,
and ships experience between kernels as checksummed bundles.
"""

from .agenda import ANIMA_WAKE_SPEC, AgendaItem, AgendaScheduler, install_anima_wake
from .bundle import ImportReport, export_bundle, import_bundle, load_bundle
from .clock import LogicalClock
from .config import KernelConfig, dump_config, load_config
from .credit import CreditEntry, CreditReport, UsageLink, apply_credit, replay_q
from .errors import (
    ChecksumError,
    CycleError,
    JudgeError,
    KernelError,
    LockError,
    NotFoundError,
    StorageError,
    ValidationError,
)
from .eventlog import EventLog, canonical_json
from .experience import (
    ExperienceDraft,
    ExperienceRecord,
    ExperienceStore,
    InsertOutcome,
    q_step,
    q_step_vector,
)
from .kernel import SynKernel, init_data_dir
from .memory import CATEGORIES, Contact, IdentityMemory, MemoryEntry
from .retrieval import ScoredCandidate, recall, score_candidates, select_top_k, shortlist
from .rewards import (
    DIM_NAMES,
    BenchmarkJudge,
    MarkerJudge,
    RewardVector,
    RewardWindow,
    collect_window,
    judge_turn,
    scalarize,
)
from .sessions import DagNode, MailboxMessage, SessionKernel, SessionRecord
from .similarity import SimilarityProvider, TrigramSimilarity
from .simulate import (
    EpochTrajectory,
    MetricsReport,
    SyntheticWorld,
    TransferResult,
    WorldSpec,
    report,
    run_epochs,
    run_growth,
    transfer_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ANIMA_WAKE_SPEC",
    "AgendaItem",
    "AgendaScheduler",
    "BenchmarkJudge",
    "CATEGORIES",
    "ChecksumError",
    "Contact",
    "CreditEntry",
    "CreditReport",
    "CycleError",
    "DIM_NAMES",
    "DagNode",
    "EpochTrajectory",
    "EventLog",
    "ExperienceDraft",
    "ExperienceRecord",
    "ExperienceStore",
    "IdentityMemory",
    "ImportReport",
    "InsertOutcome",
    "JudgeError",
    "KernelConfig",
    "KernelError",
    "LockError",
    "LogicalClock",
    "MailboxMessage",
    "MarkerJudge",
    "MemoryEntry",
    "MetricsReport",
    "NotFoundError",
    "RewardVector",
    "RewardWindow",
    "ScoredCandidate",
    "SessionKernel",
    "SessionRecord",
    "SimilarityProvider",
    "StorageError",
    "SynKernel",
    "SyntheticWorld",
    "TransferResult",
    "TrigramSimilarity",
    "UsageLink",
    "ValidationError",
    "WorldSpec",
    "apply_credit",
    "canonical_json",
    "collect_window",
    "dump_config",
    "export_bundle",
    "import_bundle",
    "init_data_dir",
    "install_anima_wake",
    "judge_turn",
    "load_bundle",
    "load_config",
    "q_step",
    "q_step_vector",
    "recall",
    "replay_q",
    "report",
    "run_epochs",
    "run_growth",
    "scalarize",
    "score_candidates",
    "select_top_k",
    "shortlist",
    "transfer_experiment",
]
