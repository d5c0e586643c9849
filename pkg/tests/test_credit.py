import pytest

from synkernel.clock import LogicalClock
from synkernel.config import KernelConfig
from synkernel.credit import CreditReport, UsageLink, apply_credit, replay_q
from synkernel.errors import StorageError
from synkernel.experience import ExperienceDraft, ExperienceStore
from synkernel.rewards import RewardVector
from synkernel.similarity import TrigramSimilarity

CFG = KernelConfig()


CONTENT = [
    ("rotate the signing keys", "run keyctl rotate --all", "keys rotated"),
    ("summarize weekly incident reports", "python summarize.py --window 7d", "report built"),
    ("archive stale feature branches", "git branch --merged | xargs archive", "cleaned up"),
]


def setup_store(n=3):
    clock = LogicalClock()
    store = ExperienceStore(TrigramSimilarity(), clock)
    ids = []
    for intent, script, digest in CONTENT[:n]:
        out = store.insert(ExperienceDraft(intent=intent, script=script, digest=digest), CFG)
        assert out.kind == "added"
        ids.append(out.id)
    return store, clock, ids


def test_apply_credit_hits_the_whole_usage_set():
    store, clock, ids = setup_store()
    usage = UsageLink(session_id=1, turn_index=0, used_ids=tuple(ids[:2]))
    vec = RewardVector(dims=(1, 0, -1, 0, 0), confidence=0.5, judge_id="t")
    report = apply_credit(store, usage, vec, CFG)
    assert isinstance(report, CreditReport)
    assert [e.id for e in report.entries] == sorted(ids[:2])
    assert report.alpha == CFG.alpha
    assert report.confidence == 0.5
    for e in report.entries:
        assert e.q_after[0] == pytest.approx(0.15)
        assert e.q_after[2] == pytest.approx(-0.15)
    # the third record untouched
    assert list(store.get(ids[2]).q_values) == [0.0] * 5


def test_empty_usage_set_is_a_no_op():
    store, clock, ids = setup_store(1)
    usage = UsageLink(session_id=1, turn_index=0, used_ids=())
    vec = RewardVector(dims=(1, 0, 0, 0, 0), confidence=1.0, judge_id="t")
    report = apply_credit(store, usage, vec, CFG)
    assert report.entries == ()
    assert list(store.get(ids[0]).q_values) == [0.0] * 5


def test_replay_reproduces_store_values_exactly():
    store, clock, ids = setup_store()
    rewards = [
        ((1, 0, 1, 0, 0), 1.0),
        ((-1, 0, 0, 1, 0), 0.25),
        ((0, -1, 1, 0, 1), 0.8),
        ((1, 1, 1, 1, 1), 0.05),
    ]
    for dims, conf in rewards:
        clock.advance(1)
        usage = UsageLink(session_id=1, turn_index=clock.now, used_ids=tuple(ids))
        vec = RewardVector(dims=dims, confidence=conf, judge_id="t")
        apply_credit(store, usage, vec, CFG)

    log = store.log_entries()
    for i in ids:
        assert tuple(replay_q(log, i)) == tuple(store.get(i).q_values)


def test_replay_detects_missing_creation():
    store, clock, ids = setup_store(1)
    apply_credit(
        store,
        UsageLink(1, 0, (ids[0],)),
        RewardVector(dims=(1, 0, 0, 0, 0), confidence=1.0, judge_id="t"),
        CFG,
    )
    # drop the insert entry: the credit chain has no base
    truncated = [e for e in store.log_entries() if e["op"] != "insert"]
    with pytest.raises(StorageError):
        replay_q(truncated, ids[0])


def test_replay_unknown_record():
    store, _, _ = setup_store(1)
    with pytest.raises(StorageError):
        replay_q(store.log_entries(), 999)


def test_zero_confidence_credit_changes_nothing():
    store, clock, ids = setup_store(1)
    vec = RewardVector(dims=(1, -1, 1, -1, 1), confidence=0.0, judge_id="t")
    report = apply_credit(store, UsageLink(1, 0, (ids[0],)), vec, CFG)
    assert report.entries[0].q_before == report.entries[0].q_after
    assert list(store.get(ids[0]).q_values) == [0.0] * 5
