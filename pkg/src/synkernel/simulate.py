"""Deterministic synthetic worlds exercising the whole learning loop.

The world is the smallest environment in which injected experience can
causally matter. Tasks come in F families; each family hides one correct
script token. A scripted policy succeeds with probability p1 when any
injected experience's script carries the task family's correct token, and
with base probability p0 otherwise. Success episodes distill the correct
token into the store; failures distill a per-family decoy, so value
learning has to separate two records the intent similarity cannot tell
apart. That is the entire game: no model, no language, just the
recall - act - window - judge - credit - encode loop with a measurable
success rate per epoch.

Determinism: family tokens, per-epoch task order, and per-task success draws
all derive from the world seed alone. The same draw sequence is used whether
or not an arm matched (common random numbers), so two arms differ only
through retrieval, and a no-signal world (p0 = p1) yields identical
trajectories for every arm.
"""

from __future__ import annotations

import dataclasses
import random
import string
import tempfile
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import KernelConfig
from .errors import ValidationError
from .kernel import SynKernel
from .rewards import MarkerJudge

ARMS = ("full", "sim", "none")


@dataclass(frozen=True)
class WorldSpec:
    families: int = 10
    tasks_per_epoch: int = 200
    p0: float = 0.3
    p1: float = 0.9
    rng_seed: int = 42

    def __post_init__(self):
        if self.families < 1:
            raise ValidationError("families", "must be >= 1")
        if self.tasks_per_epoch < 1:
            raise ValidationError("tasks_per_epoch", "must be >= 1")
        # p0 = p1 is allowed: it disables the boost and gives the flat,
        # signal-free world the no-learning checks rely on.
        if not (0.0 <= self.p0 <= self.p1 <= 1.0):
            raise ValidationError("p0", f"need 0 <= p0 <= p1 <= 1, got {self.p0}, {self.p1}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Task:
    family: int
    variant: int
    intent: str


# Chance that a lucky success without the right procedure still reveals it.
# Below this point the trace holds nothing reusable and no experience is
# encoded, so the store needs several tries per family before the reliable
# path appears.
DISCOVER_RATE = 0.35


class SyntheticWorld:
    """Stateless task generator; everything derives from (seed, epoch)."""

    def __init__(self, spec: WorldSpec):
        self.spec = spec
        rng = random.Random(f"world:{spec.rng_seed}")
        self.family_words = []
        self.correct_tokens = []
        self.decoy_tokens = []
        for _ in range(spec.families):
            self.family_words.append("".join(rng.choices(string.ascii_lowercase, k=8)))
            correct = "".join(rng.choices("0123456789abcdef", k=12))
            decoy = "".join(rng.choices("0123456789abcdef", k=12))
            while decoy == correct:
                decoy = "".join(rng.choices("0123456789abcdef", k=12))
            self.correct_tokens.append(correct)
            self.decoy_tokens.append(decoy)

    def intent_for(self, family: int, variant: int) -> str:
        return f"{self.family_words[family]} pipeline incident {variant:04d}"

    def success_script(self, family: int) -> str:
        return f"invoke {self.correct_tokens[family]}"

    def failure_script(self, family: int) -> str:
        return f"invoke {self.decoy_tokens[family]}"

    def matched(self, family: int, scripts: list[str]) -> bool:
        token = self.correct_tokens[family]
        return any(token in s for s in scripts)

    def observed_script(self, task: Task, matched: bool, success: bool, discover: float) -> str | None:
        """What the trace yields: the reusable path when it actually ran or a
        lucky success happened to reveal it, the family's tempting decoy on
        failure, and nothing at all from a success that worked by luck.
        """
        if success and (matched or discover < DISCOVER_RATE):
            return self.success_script(task.family)
        if success:
            return None
        return self.failure_script(task.family)

    def epoch_batch(self, epoch: int) -> tuple[list[Task], list[float], list[float]]:
        """Tasks plus success and discovery draws for one epoch.

        Both draw streams are fixed by (seed, epoch) alone, so arms that make
        different choices still face the same luck (common random numbers).
        """
        spec = self.spec
        fams = [j % spec.families for j in range(spec.tasks_per_epoch)]
        random.Random(f"order:{spec.rng_seed}:{epoch}").shuffle(fams)
        draw_rng = random.Random(f"draw:{spec.rng_seed}:{epoch}")
        draws = [draw_rng.random() for _ in range(spec.tasks_per_epoch)]
        discover_rng = random.Random(f"discover:{spec.rng_seed}:{epoch}")
        discovers = [discover_rng.random() for _ in range(spec.tasks_per_epoch)]
        tasks = [
            Task(family=f, variant=epoch * spec.tasks_per_epoch + j, intent=self.intent_for(f, epoch * spec.tasks_per_epoch + j))
            for j, f in enumerate(fams)
        ]
        return tasks, draws, discovers


@dataclass(frozen=True)
class EpochTrajectory:
    success_rates: tuple[float, ...]
    store_sizes: tuple[int, ...]
    arm: str
    world: dict
    config: dict

    def to_dict(self) -> dict:
        return {
            "success_rates": list(self.success_rates),
            "store_sizes": list(self.store_sizes),
            "arm": self.arm,
            "world": dict(self.world),
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochTrajectory":
        return cls(
            success_rates=tuple(d["success_rates"]),
            store_sizes=tuple(d["store_sizes"]),
            arm=d.get("arm", "full"),
            world=d.get("world", {}),
            config=d.get("config", {}),
        )


def sim_config(seed: int, arm: str = "full") -> KernelConfig:
    """Harness kernel configuration.

    One injected experience per turn (K = 1) keeps credit assignment crisp;
    zero-seeded values make the delayed credit loop, not the encoding step,
    the thing under test, and epsilon = 0 leaves directed exploration to the
    visit bonus so runs with a shared seed differ only through outcome
    draws. The default window length stays, so feedback lands a couple of
    tasks after the turn it judges. The sim arm turns off value and
    exploration terms so ranking is similarity alone; the none arm skips
    injection entirely (handled by the driver).
    """
    if arm not in ARMS:
        raise ValidationError("arm", f"unknown arm {arm!r}; use one of {ARMS}")
    config = KernelConfig(top_k=1, seed_q="zero", epsilon=0.0, rng_seed=seed)
    if arm == "sim":
        config = config.replace(w_q=0.0, ucb_c=0.0)
    return config


def run_epochs(
    world: SyntheticWorld,
    kernel: SynKernel,
    epochs: int,
    arm: str = "full",
    judge=None,
) -> EpochTrajectory:
    """Drive the full loop for a number of epochs and record the curve."""
    if arm not in ARMS:
        raise ValidationError("arm", f"unknown arm {arm!r}; use one of {ARMS}")
    judge = judge if judge is not None else MarkerJudge()
    rates: list[float] = []
    sizes: list[int] = []
    if epochs > 0:
        session = kernel.sessions.create_session(scope=f"sim:{arm}").id
        # Turns awaiting a full window; credit lands a couple of tasks late,
        # which is the delayed-feedback regime the store is built for.
        pending: deque[int] = deque()
        for epoch in range(epochs):
            tasks, draws, discovers = world.epoch_batch(epoch)
            wins = 0
            for j, task in enumerate(tasks):
                kernel.clock.advance(1)
                t = kernel.sessions.record_turn(session, task.intent, "scripted policy run")
                if arm == "none":
                    payload = []
                else:
                    payload = kernel.recall(task.intent, session_id=session, turn_index=t)
                matched = world.matched(task.family, [p["script"] for p in payload])
                p_success = world.spec.p1 if matched else world.spec.p0
                success = draws[j] < p_success
                out = "+1" if success else "-1"
                kernel.sessions.post_message(
                    session, f"FB:out={out},int=0,exe=0,orc=0,exp=0,c=1.0"
                )
                pending.append(t)
                while pending and kernel.window_ready(session, pending[0]):
                    kernel.apply_reward(session, pending.popleft(), judge)
                script = world.observed_script(task, matched, success, discovers[j])
                if script is not None:
                    status = "resolved" if success else "stalled"
                    kernel.encode_experience(
                        intent=task.intent,
                        script=script,
                        digest=f"trace {task.intent} {status}",
                        source_model="sim-policy",
                        used_ids=[p["id"] for p in payload],
                    )
                if success:
                    wins += 1
            rates.append(wins / len(tasks))
            sizes.append(len(kernel.store))
        while pending:
            kernel.apply_reward(session, pending.popleft(), judge, force=True)
    return EpochTrajectory(
        success_rates=tuple(rates),
        store_sizes=tuple(sizes),
        arm=arm,
        world=world.spec.to_dict(),
        config=kernel.config.to_dict(),
    )


def run_growth(spec: WorldSpec, epochs: int, arm: str = "full") -> EpochTrajectory:
    """One growth run: fresh in-memory kernel, seeded from the world spec."""
    world = SyntheticWorld(spec)
    kernel = SynKernel(config=sim_config(spec.rng_seed, arm))
    return run_epochs(world, kernel, epochs, arm=arm)


@dataclass(frozen=True)
class TransferResult:
    donor: EpochTrajectory
    baseline: EpochTrajectory
    recipient: EpochTrajectory
    bundle_records: int

    @property
    def delta(self) -> float:
        return self.recipient.success_rates[0] - self.baseline.success_rates[0]

    def to_dict(self) -> dict:
        return {
            "donor": self.donor.to_dict(),
            "baseline": self.baseline.to_dict(),
            "recipient": self.recipient.to_dict(),
            "bundle_records": self.bundle_records,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferResult":
        return cls(
            donor=EpochTrajectory.from_dict(d["donor"]),
            baseline=EpochTrajectory.from_dict(d["baseline"]),
            recipient=EpochTrajectory.from_dict(d["recipient"]),
            bundle_records=d["bundle_records"],
        )


def transfer_experiment(
    spec: WorldSpec, donor_epochs: int, seed: int | None = None
) -> TransferResult:
    """Donor accumulates, exports a bundle; a fresh recipient starts with it.

    Baseline and recipient run the identical first epoch (same tasks, same
    draws, same kernel seed); the only difference is the imported bundle, so
    with donor_epochs = 0 the delta is exactly zero.
    """
    if seed is not None:
        spec = dataclasses.replace(spec, rng_seed=seed)
    world = SyntheticWorld(spec)
    donor = SynKernel(config=sim_config(spec.rng_seed, "full"))
    donor_traj = run_epochs(world, donor, donor_epochs)
    baseline_kernel = SynKernel(config=sim_config(spec.rng_seed, "full"))
    baseline = run_epochs(world, baseline_kernel, 1)
    recipient_kernel = SynKernel(config=sim_config(spec.rng_seed, "full"))
    with tempfile.TemporaryDirectory() as tmp:
        bundle_path = Path(tmp) / "donor.bundle"
        donor.export_bundle(bundle_path)
        report = recipient_kernel.import_bundle(bundle_path)
    recipient = run_epochs(world, recipient_kernel, 1)
    return TransferResult(
        donor=donor_traj,
        baseline=baseline,
        recipient=recipient,
        bundle_records=report.total,
    )


@dataclass(frozen=True)
class MetricsReport:
    start: float
    best: float
    gain_pp: float
    relative_gain: float | None
    gain_by_epoch5_fraction: float | None
    deltas: dict | None = None

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "best": self.best,
            "gain_pp": self.gain_pp,
            "relative_gain": self.relative_gain,
            "gain_by_epoch5_fraction": self.gain_by_epoch5_fraction,
            "deltas": self.deltas,
        }


def report(data) -> MetricsReport:
    """Summarize a trajectory, or a (baseline, injected) pair of score sets.

    Growth mode: start is the first epoch, best the maximum, gain their
    difference; relative gain is left undefined (None) when start is zero
    rather than reported as infinity; the epoch-5 fraction says how much of
    the eventual gain was already realized by epoch 5 (1 when there was no
    gain to realize).

    Transfer mode (a 2-tuple of score sequences): per-metric deltas of
    injected minus baseline, means and medians.
    """
    if isinstance(data, EpochTrajectory):
        data = data.success_rates
    if (
        isinstance(data, tuple)
        and len(data) == 2
        and all(isinstance(side, (list, tuple, np.ndarray)) for side in data)
    ):
        baseline, injected = (np.asarray(side, dtype=np.float64) for side in data)
        if baseline.size == 0 or injected.size == 0:
            raise ValidationError("scores", "both sides of a transfer pair must be non-empty")
        start = float(baseline.mean())
        best = float(injected.mean())
        gain = best - start
        return MetricsReport(
            start=start,
            best=best,
            gain_pp=gain,
            relative_gain=(gain / start) if start != 0 else None,
            gain_by_epoch5_fraction=None,
            deltas={
                "mean": float(injected.mean() - baseline.mean()),
                "median": float(np.median(injected) - np.median(baseline)),
            },
        )
    traj = [float(v) for v in data]
    if not traj:
        raise ValidationError("trajectory", "must be non-empty")
    start = traj[0]
    best = max(traj)
    gain = best - start
    score5 = traj[4] if len(traj) >= 5 else traj[-1]
    return MetricsReport(
        start=start,
        best=best,
        gain_pp=gain,
        relative_gain=(gain / start) if start != 0 else None,
        gain_by_epoch5_fraction=((score5 - start) / gain) if gain > 0 else 1.0,
        deltas=None,
    )
