"""Command-line service: every kernel operation as a subcommand.

One process per data directory, guarded by an exclusive lock file for
mutating commands; read-only commands bypass the lock. The directory is
selected by SYNKERNEL_DATA (which overrides --data-dir) and defaults to
.synkernel under the working directory, so each workspace gets its own
kernel. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import filelock

from .bundle import export_bundle, import_bundle
from .errors import KernelError, LockError
from .eventlog import canonical_json
from .kernel import BUNDLES_DIR, SynKernel, init_data_dir
from .rewards import BenchmarkJudge, MarkerJudge
from .simulate import (
    EpochTrajectory,
    TransferResult,
    WorldSpec,
    report,
    run_growth,
    transfer_experiment,
)

JUDGES = {"marker": MarkerJudge, "benchmark": BenchmarkJudge}

# Commands that only read state may share the directory with a writer.
READ_ONLY = {
    ("session", "list"),
    ("session", "dag", "show"),
    ("mailbox", "dead"),
    ("agenda", "list"),
    ("memory", "query"),
    ("contact", "list"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synkernel",
        description="Headless agent-runtime kernel: experience learning, sessions, agenda, bundles.",
    )
    parser.add_argument("--data-dir", default=None, help="kernel data directory (SYNKERNEL_DATA overrides)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("session", help="sessions and their plan DAGs")
    ssub = p.add_subparsers(dest="sub", required=True)
    sp = ssub.add_parser("new")
    sp.add_argument("--scope", required=True)
    sp.add_argument("--parent", type=int, default=None)
    ssub.add_parser("list")
    sp = ssub.add_parser("complete")
    sp.add_argument("--id", type=int, required=True)
    sp.add_argument("--result", default="")
    sp = ssub.add_parser("fail")
    sp.add_argument("--id", type=int, required=True)
    sp.add_argument("--reason", default="")
    sp = ssub.add_parser("turn")
    sp.add_argument("--id", type=int, required=True)
    sp.add_argument("--request", required=True)
    sp.add_argument("--action", default="")
    sp = ssub.add_parser("post")
    sp.add_argument("--id", type=int, required=True)
    sp.add_argument("--text", required=True)
    sp = ssub.add_parser("spawn")
    sp.add_argument("--parent", type=int, required=True)
    sp.add_argument("--spec", required=True)
    sp.add_argument("--node", default=None)
    sp = ssub.add_parser("dag")
    dsub = sp.add_subparsers(dest="dagsub", required=True)
    dp = dsub.add_parser("add")
    dp.add_argument("--session", type=int, required=True)
    dp.add_argument("--node", required=True)
    dp.add_argument("--label", default="")
    dp.add_argument("--dep", action="append", default=[])
    for name in ("done", "fail"):
        dp = dsub.add_parser(name)
        dp.add_argument("--session", type=int, required=True)
        dp.add_argument("--node", required=True)
    dp = dsub.add_parser("show")
    dp.add_argument("--session", type=int, required=True)

    p = sub.add_parser("mailbox", help="asynchronous delivery between sessions")
    msub = p.add_subparsers(dest="sub", required=True)
    mp = msub.add_parser("send")
    mp.add_argument("--to", required=True, help="home | session:<id> | contact:<name>")
    mp.add_argument("--body", required=True)
    mp.add_argument("--sender", default="cli")
    mp = msub.add_parser("poll")
    mp.add_argument("--target", required=True)
    msub.add_parser("dead")

    p = sub.add_parser("agenda", help="durable temporal triggers")
    asub = p.add_subparsers(dest="sub", required=True)
    ap = asub.add_parser("add")
    trigger = ap.add_mutually_exclusive_group(required=True)
    trigger.add_argument("--at", type=int, default=None, help="logical fire time")
    trigger.add_argument("--on", default=None, help="event key")
    ap.add_argument("--do", dest="action_spec", required=True)
    ap.add_argument("--deliver", default="home", help="home | session:<id> | silent")
    ap.add_argument("--every", type=int, default=None)
    ap.add_argument("--auto-complete", action="store_true")
    ap = asub.add_parser("tick")
    ap.add_argument("--to", type=int, required=True)
    ap = asub.add_parser("raise")
    ap.add_argument("event")
    asub.add_parser("list")

    p = sub.add_parser("memory", help="typed identity memory")
    ysub = p.add_subparsers(dest="sub", required=True)
    yp = ysub.add_parser("put")
    yp.add_argument("--type", dest="category", required=True)
    yp.add_argument("--text", required=True)
    yp = ysub.add_parser("query")
    yp.add_argument("--type", dest="category", default=None)
    yp.add_argument("--match", default=None)

    p = sub.add_parser("contact", help="durable address book")
    csub = p.add_subparsers(dest="sub", required=True)
    cp = csub.add_parser("add")
    cp.add_argument("--name", required=True)
    cp.add_argument("--address", required=True)
    cp.add_argument("--friend", action="store_true")
    csub.add_parser("list")

    p = sub.add_parser("encode", help="store one experience record")
    p.add_argument("--intent", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--digest", required=True)
    p.add_argument("--source", default="manual")
    p.add_argument("--used", action="append", type=int, default=[])

    p = sub.add_parser("recall", help="retrieve experiences for a query")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--session", type=int, default=None)
    p.add_argument("--turn", type=int, default=None)

    p = sub.add_parser("reward", help="judge a turn and credit its experiences")
    p.add_argument("--session", type=int, required=True)
    p.add_argument("--turn", type=int, required=True)
    p.add_argument("--judge", choices=sorted(JUDGES), default="marker")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("bundle", help="experience transfer files")
    bsub = p.add_subparsers(dest="sub", required=True)
    bp = bsub.add_parser("export")
    bp.add_argument("--out", required=True)
    bp = bsub.add_parser("import")
    bp.add_argument("--in", dest="infile", required=True)
    bp.add_argument("--reset-visits", action="store_true")

    p = sub.add_parser("simulate", help="synthetic-world experiments (no data dir)")
    wsub = p.add_subparsers(dest="sub", required=True)
    for name in ("grow", "transfer"):
        wp = wsub.add_parser(name)
        wp.add_argument("--families", type=int, default=10)
        wp.add_argument("--tasks", type=int, default=200)
        wp.add_argument("--p0", type=float, default=0.3)
        wp.add_argument("--p1", type=float, default=0.9)
        wp.add_argument("--seed", type=int, default=42)
        wp.add_argument("--out", default=None)
        if name == "grow":
            wp.add_argument("--epochs", type=int, default=8)
            wp.add_argument("--arm", choices=("full", "sim", "none"), default="full")
        else:
            wp.add_argument("--donor-epochs", type=int, default=6)

    p = sub.add_parser("report", help="metrics from a saved trajectory file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")

    return parser


def resolve_data_dir(args) -> Path:
    env = os.environ.get("SYNKERNEL_DATA")
    if env:
        return Path(env)
    if args.data_dir:
        return Path(args.data_dir)
    return Path.cwd() / ".synkernel"


def _emit(args, payload, human: str | None = None) -> None:
    if args.json or human is None:
        print(canonical_json(payload))
    else:
        print(human)


def _needs_kernel(args) -> bool:
    return args.cmd not in ("simulate", "report")


def _is_read_only(args) -> bool:
    key = [args.cmd, getattr(args, "sub", None), getattr(args, "dagsub", None)]
    key = tuple(k for k in key if k)
    return key in READ_ONLY


def dispatch(args) -> int:
    if not _needs_kernel(args):
        return _dispatch_standalone(args)
    data_dir = resolve_data_dir(args)
    init_data_dir(data_dir)
    if _is_read_only(args):
        kernel = SynKernel(data_dir=data_dir)
        return _dispatch_kernel(kernel, args)
    lock = filelock.FileLock(str(data_dir / "lock"), timeout=10)
    try:
        with lock:
            kernel = SynKernel(data_dir=data_dir)
            code = _dispatch_kernel(kernel, args)
            kernel.save()
            return code
    except filelock.Timeout:
        raise LockError(f"another process holds the kernel lock in {data_dir}")


def _session_summary(s) -> dict:
    return {
        "id": s.id,
        "scope": s.scope,
        "parent_id": s.parent_id,
        "state": s.state,
        "title": s.title,
        "turns": s.turn_count,
        "children": list(s.children),
    }


def _message_summary(m) -> dict:
    return {
        "id": m.id,
        "sender": m.sender,
        "target": m.target,
        "payload": m.payload,
        "state": m.delivery_state,
        "reason": m.reason,
    }


def _dispatch_kernel(kernel: SynKernel, args) -> int:
    if args.cmd == "session":
        if args.sub == "new":
            rec = kernel.sessions.create_session(args.scope, parent_id=args.parent)
            _emit(args, {"id": rec.id}, f"session {rec.id} created (scope {rec.scope})")
        elif args.sub == "list":
            _emit(args, [_session_summary(s) for s in kernel.sessions.list_sessions()])
        elif args.sub == "complete":
            kernel.sessions.complete_session(args.id, result=args.result)
            _emit(args, {"id": args.id, "state": "completed"}, f"session {args.id} completed")
        elif args.sub == "fail":
            kernel.sessions.fail_session(args.id, reason=args.reason)
            _emit(args, {"id": args.id, "state": "failed"}, f"session {args.id} failed")
        elif args.sub == "turn":
            t = kernel.sessions.record_turn(args.id, args.request, args.action)
            _emit(args, {"turn_index": t}, f"turn {t} recorded in session {args.id}")
        elif args.sub == "post":
            kernel.sessions.post_message(args.id, args.text)
            _emit(args, {"posted": True}, f"message posted to session {args.id}")
        elif args.sub == "spawn":
            child = kernel.sessions.spawn_child_task(args.parent, args.spec, dag_node=args.node)
            _emit(args, {"child_id": child}, f"child session {child} spawned")
        elif args.sub == "dag":
            if args.dagsub == "add":
                promoted = kernel.sessions.dag_add_node(
                    args.session, args.node, label=args.label, deps=args.dep
                )
                _emit(args, {"node": args.node, "promoted": promoted},
                      f"node {args.node} added; promoted: {promoted or 'none'}")
            elif args.dagsub == "done":
                promoted = kernel.sessions.dag_complete_node(args.session, args.node)
                _emit(args, {"node": args.node, "promoted": promoted},
                      f"node {args.node} done; promoted: {promoted or 'none'}")
            elif args.dagsub == "fail":
                kernel.sessions.dag_fail_node(args.session, args.node)
                _emit(args, {"node": args.node, "status": "failed"}, f"node {args.node} failed")
            elif args.dagsub == "show":
                nodes = kernel.sessions.dag_nodes(args.session)
                _emit(args, {
                    n.node_id: {"status": n.status, "deps": sorted(n.deps), "label": n.label}
                    for n in nodes.values()
                })
        return 0

    if args.cmd == "mailbox":
        if args.sub == "send":
            msg = kernel.sessions.mailbox_send(args.sender, args.to, args.body)
            _emit(args, _message_summary(msg),
                  f"message {msg.id} to {msg.target}: {msg.delivery_state}"
                  + (f" ({msg.reason})" if msg.reason else ""))
        elif args.sub == "poll":
            msgs = kernel.sessions.mailbox_poll(args.target)
            _emit(args, [_message_summary(m) for m in msgs])
        elif args.sub == "dead":
            _emit(args, [_message_summary(m) for m in kernel.sessions.dead_letters()])
        return 0

    if args.cmd == "agenda":
        if args.sub == "add":
            trigger = (
                {"kind": "wallclock", "fire_at": args.at}
                if args.at is not None
                else {"kind": "event", "key": args.on}
            )
            item_id = kernel.agenda.schedule(
                trigger,
                args.action_spec,
                delivery=args.deliver,
                recurring=args.every,
                auto_complete=args.auto_complete,
            )
            _emit(args, {"id": item_id}, f"agenda item {item_id} scheduled")
        elif args.sub == "tick":
            fired = kernel.agenda.tick(args.to)
            _emit(args, {"now": kernel.clock.now, "fired": fired},
                  f"clock at {kernel.clock.now}; fired: {fired or 'none'}")
        elif args.sub == "raise":
            fired = kernel.agenda.raise_event(args.event)
            _emit(args, {"fired": fired}, f"fired: {fired or 'none'}")
        elif args.sub == "list":
            _emit(args, [i.to_dict() for i in kernel.agenda.items()])
        return 0

    if args.cmd == "memory":
        if args.sub == "put":
            entry_id = kernel.identity.memory_put(args.category, args.text)
            _emit(args, {"id": entry_id}, f"memory entry {entry_id} stored")
        else:
            entries = kernel.identity.memory_query(category=args.category, text=args.match)
            _emit(args, [
                {"id": m.id, "category": m.category, "content": m.content, "created_at": m.created_at}
                for m in entries
            ])
        return 0

    if args.cmd == "contact":
        if args.sub == "add":
            kernel.identity.contact_upsert(args.name, args.address, friend=args.friend)
            _emit(args, {"name": args.name}, f"contact {args.name} saved")
        else:
            _emit(args, [
                {"name": c.name, "address": c.address, "friend": c.friend}
                for c in kernel.identity.contact_list()
            ])
        return 0

    if args.cmd == "encode":
        outcome = kernel.encode_experience(
            intent=args.intent,
            script=args.script,
            digest=args.digest,
            source_model=args.source,
            used_ids=args.used,
        )
        _emit(args, {"kind": outcome.kind, "id": outcome.id},
              f"experience {outcome.id} {outcome.kind}")
        return 0

    if args.cmd == "recall":
        if (args.session is None) != (args.turn is None):
            raise KernelError("recall needs both --session and --turn, or neither")
        payload = kernel.recall(
            args.query, k=args.k, session_id=args.session, turn_index=args.turn
        )
        print(canonical_json(payload))
        return 0

    if args.cmd == "reward":
        vector, credit = kernel.apply_reward(
            args.session, args.turn, JUDGES[args.judge](), force=args.force
        )
        _emit(args, {
            "reward": vector.as_dict(),
            "credited": [
                {"id": e.id, "q_before": list(e.q_before), "q_after": list(e.q_after)}
                for e in credit.entries
            ],
        })
        return 0

    if args.cmd == "bundle":
        if args.sub == "export":
            out = Path(args.out)
            if not out.is_absolute() and kernel.data_dir is not None and not out.parent.name:
                out = kernel.data_dir / BUNDLES_DIR / out
            kernel.export_bundle(out)
            _emit(args, {"out": str(out), "records": len(kernel.store)},
                  f"exported {len(kernel.store)} records to {out}")
        else:
            src = Path(args.infile)
            if not src.is_absolute() and kernel.data_dir is not None and not src.parent.name:
                src = kernel.data_dir / BUNDLES_DIR / src
            rep = kernel.import_bundle(src, reset_visits=args.reset_visits)
            _emit(args, {"added": rep.added, "replaced": rep.replaced, "skipped": rep.skipped},
                  f"imported: {rep.added} added, {rep.replaced} replaced, {rep.skipped} skipped")
        return 0

    raise KernelError(f"unhandled command {args.cmd}")


def _dispatch_standalone(args) -> int:
    if args.cmd == "simulate":
        spec = WorldSpec(
            families=args.families,
            tasks_per_epoch=args.tasks,
            p0=args.p0,
            p1=args.p1,
            rng_seed=args.seed,
        )
        if args.sub == "grow":
            traj = run_growth(spec, args.epochs, arm=args.arm)
            payload = traj.to_dict()
            human = "epoch success rates: " + ", ".join(f"{r:.3f}" for r in traj.success_rates)
        else:
            result = transfer_experiment(spec, args.donor_epochs)
            payload = result.to_dict()
            human = (
                f"baseline {result.baseline.success_rates[0]:.3f} vs "
                f"recipient {result.recipient.success_rates[0]:.3f} "
                f"(delta {result.delta:+.3f}, {result.bundle_records} records transferred)"
            )
        if args.out:
            Path(args.out).write_text(canonical_json(payload) + "\n", encoding="utf-8")
        _emit(args, payload, human + (f"; written to {args.out}" if args.out else ""))
        return 0

    if args.cmd == "report":
        data = json.loads(Path(args.infile).read_text(encoding="utf-8"))
        if "baseline" in data and "recipient" in data:
            result = TransferResult.from_dict(data)
            rep = report((result.baseline.success_rates, result.recipient.success_rates))
            rows = [("baseline", result.baseline), ("recipient", result.recipient)]
        else:
            traj = EpochTrajectory.from_dict(data)
            rep = report(traj)
            rows = [(traj.arm, traj)]
        if args.format == "csv":
            print("arm,epoch,success_rate,store_size")
            for arm, traj in rows:
                for i, (rate, size) in enumerate(zip(traj.success_rates, traj.store_sizes), 1):
                    print(f"{arm},{i},{rate},{size}")
        else:
            print(canonical_json(rep.to_dict()))
        return 0

    raise KernelError(f"unhandled command {args.cmd}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        return dispatch(args)
    except KernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
