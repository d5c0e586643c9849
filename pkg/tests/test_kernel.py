"""Kernel facade: data-dir lifecycle, the learning loop, durability."""

import pytest

from synkernel.config import KernelConfig
from synkernel.errors import StorageError, ValidationError
from synkernel.kernel import DATA_VERSION, SynKernel, init_data_dir
from synkernel.rewards import MarkerJudge


def drive_turn(kernel, session, request, feedback=None):
    """One full turn: record, recall, post feedback lines to fill the window."""
    t = kernel.sessions.record_turn(session, request, "scripted run")
    payload = kernel.recall(request, session_id=session, turn_index=t)
    for line in feedback or []:
        kernel.sessions.post_message(session, line)
    return t, payload


def test_init_stamps_version_and_kernel_id(tmp_path):
    root = tmp_path / "data"
    init_data_dir(root)
    assert (root / "VERSION").read_text().strip() == DATA_VERSION
    kid = (root / "kernel_id").read_text().strip()
    assert len(kid) == 32
    assert (root / "bundles").is_dir()
    # re-init is a no-op, the identity survives
    init_data_dir(root)
    assert (root / "kernel_id").read_text().strip() == kid


def test_init_refuses_foreign_directory(tmp_path):
    root = tmp_path / "stuff"
    root.mkdir()
    (root / "unrelated.txt").write_text("hello")
    with pytest.raises(StorageError):
        init_data_dir(root)
    (root / "VERSION").write_text("999\n")
    with pytest.raises(StorageError, match="version"):
        init_data_dir(root)


def test_kernel_identity_comes_from_the_directory(tmp_path):
    k1 = SynKernel(data_dir=tmp_path / "d")
    k2 = SynKernel(data_dir=tmp_path / "d")
    assert k1.kernel_id == k2.kernel_id
    ephemeral = SynKernel()
    assert ephemeral.kernel_id.startswith("ephemeral-")


def test_reopen_restores_store_sessions_and_clock(tmp_path):
    k = SynKernel(data_dir=tmp_path / "d")
    k.clock.advance(41)
    out = k.encode_experience(
        intent="restart the ingest worker",
        script="svc restart ingest",
        digest="worker came back healthy",
    )
    sess = k.sessions.create_session("ops").id
    k.identity.memory_put("user", "on the platform team")
    k.save()

    again = SynKernel(data_dir=tmp_path / "d")
    assert again.clock.now >= 41
    assert again.store.get(out.id).intent == "restart the ingest worker"
    assert again.sessions.session_view(sess).scope == "ops"
    assert again.identity.memory_query(category="user")[0].content == "on the platform team"


def test_recall_requires_both_or_neither_turn_coordinates():
    k = SynKernel()
    with pytest.raises(ValidationError):
        k.recall("anything", session_id=1)
    with pytest.raises(ValidationError):
        k.recall("anything", turn_index=0)
    assert k.recall("anything") == []  # bare recall on empty store


def test_second_recall_for_same_turn_rejected_before_any_state_change():
    k = SynKernel()
    k.encode_experience(intent="rotate keys", script="vault rotate", digest="ok")
    sess = k.sessions.create_session("ops").id
    t = k.sessions.record_turn(sess, "rotate keys", "acting")
    k.recall("rotate keys", session_id=sess, turn_index=t)
    state = k.rng.bit_generator.state
    with pytest.raises(ValidationError, match="usage"):
        k.recall("rotate keys", session_id=sess, turn_index=t)
    assert k.rng.bit_generator.state == state  # no RNG consumed by the rejection


def test_window_gates_reward_until_filled_or_closed():
    k = SynKernel(config=KernelConfig(window_h=3))
    sess = k.sessions.create_session("ops").id
    t, _ = drive_turn(k, sess, "first request")
    assert not k.window_ready(sess, t)
    with pytest.raises(ValidationError, match="window"):
        k.apply_reward(sess, t, MarkerJudge())
    k.sessions.post_message(sess, "FB:out=+1,int=0,exe=0,orc=0,exp=0,c=1.0")
    k.sessions.post_message(sess, "later chatter")
    k.sessions.post_message(sess, "more chatter")
    assert k.window_ready(sess, t)
    vector, _ = k.apply_reward(sess, t, MarkerJudge())
    assert vector.dims[0] == 1.0


def test_closing_the_session_opens_every_window():
    k = SynKernel(config=KernelConfig(window_h=5))
    sess = k.sessions.create_session("ops").id
    t, _ = drive_turn(k, sess, "only request")
    assert not k.window_ready(sess, t)
    k.sessions.complete_session(sess, result="done")
    assert k.window_ready(sess, t)


def test_force_bypasses_the_window_gate():
    k = SynKernel(config=KernelConfig(window_h=5))
    sess = k.sessions.create_session("ops").id
    t, _ = drive_turn(k, sess, "urgent request")
    vector, _ = k.apply_reward(sess, t, MarkerJudge(), force=True)
    assert vector.confidence == 0.0  # nothing in the window yet


def test_reward_credits_the_usage_set_and_runs_once(tmp_path):
    k = SynKernel(config=KernelConfig(window_h=1, epsilon=0.0))
    a = k.encode_experience(intent="scale the web tier", script="fleet scale web 4", digest="ok").id
    sess = k.sessions.create_session("ops").id
    t, payload = drive_turn(
        k, sess, "scale the web tier", ["FB:out=+1,int=0,exe=0,orc=0,exp=0,c=1.0"]
    )
    assert [p["id"] for p in payload] == [a]
    before = k.store.get(a).q_values[0]
    vector, credit = k.apply_reward(sess, t, MarkerJudge())
    after = k.store.get(a).q_values[0]
    assert after > before
    assert [e.id for e in credit.entries] == [a]
    with pytest.raises(ValidationError, match="rewarded"):
        k.apply_reward(sess, t, MarkerJudge())


def test_encode_seeding_follows_config():
    own = SynKernel(config=KernelConfig(seed_q="own_reward"))
    from synkernel.rewards import RewardVector

    r = RewardVector(dims=(1, 0, 1, 0, 0), confidence=1.0)
    out = own.encode_experience(intent="a task", script="a script", digest="d", reward=r)
    assert own.store.get(out.id).q_values == [1.0, 0.0, 1.0, 0.0, 0.0]

    zero = SynKernel(config=KernelConfig(seed_q="zero"))
    out = zero.encode_experience(intent="a task", script="a script", digest="d", reward=r)
    assert zero.store.get(out.id).q_values == [0.0] * 5


def test_bundle_methods_round_trip_between_kernels(tmp_path):
    donor = SynKernel(data_dir=tmp_path / "donor")
    donor.encode_experience(intent="prune old logs", script="logctl prune 30d", digest="freed 2gb")
    path = donor.export_bundle(tmp_path / "x.bundle")
    recipient = SynKernel(data_dir=tmp_path / "recipient")
    report = recipient.import_bundle(path)
    assert report.added == 1
    assert recipient.recall("prune old logs")[0]["script"] == "logctl prune 30d"


def test_agenda_fires_create_sessions_through_the_kernel(tmp_path):
    k = SynKernel(data_dir=tmp_path / "d")
    iid = k.agenda.schedule(
        {"kind": "wallclock", "fire_at": 10}, "daily digest", delivery="home", auto_complete=True
    )
    fired = k.agenda.tick(10)
    assert fired == [iid]
    msgs = k.sessions.mailbox_poll("home")
    assert len(msgs) == 1
    # the fired session exists and is already auto-completed
    item = k.agenda.get_item(iid)
    assert k.sessions.session_view(item.session_id).scope == "agenda"


def test_save_persists_clock_monotonically(tmp_path):
    k = SynKernel(data_dir=tmp_path / "d")
    k.clock.advance(100)
    k.save()
    again = SynKernel(data_dir=tmp_path / "d")
    assert again.clock.now == 100
    again.close()
    assert (tmp_path / "d" / "clock").read_text().strip() == "100"
