"""Reward windows, judges, and scalarization.

A turn's reward is not known when the turn ends. It surfaces in the short
window of interaction that follows: the user reacts, a build passes, an
explicit verdict lands. The pipeline therefore collects the next H messages
as a window and hands (request, action, window) to a pluggable judge, which
returns a five-dimensional discretized reward with a confidence score.

Dimensions, in order: outcome, intent understanding, execution quality,
orchestration quality, expression quality.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .config import N_REWARD_DIMS, KernelConfig
from .errors import JudgeError, ValidationError

log = logging.getLogger(__name__)

DIM_NAMES = ("out", "int", "exe", "orc", "exp")


@dataclass(frozen=True)
class InteractionTurn:
    turn_index: int
    user_request: str
    action_trajectory: str
    session_id: int


@dataclass(frozen=True)
class RewardWindow:
    """The next messages after a turn, from which reward is inferred."""

    turn_index: int
    messages: tuple[str, ...]

    @property
    def h_used(self) -> int:
        return len(self.messages)


@dataclass(frozen=True)
class RewardVector:
    """Five discretized dimensions plus judge confidence."""

    dims: tuple[int, int, int, int, int]
    confidence: float
    judge_id: str = ""

    def __post_init__(self):
        if len(self.dims) != N_REWARD_DIMS:
            raise ValidationError("dims", f"expected {N_REWARD_DIMS} dimensions")
        for name, v in zip(DIM_NAMES, self.dims):
            if v not in (-1, 0, 1):
                raise ValidationError(name, f"dimension value {v} not in {{-1, 0, +1}}")
        c = float(self.confidence)
        if not (0.0 <= c <= 1.0):
            log.warning("confidence %s outside [0, 1]; clamped", c)
            c = min(1.0, max(0.0, c))
        object.__setattr__(self, "confidence", c)
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))

    def as_dict(self) -> dict:
        d = dict(zip(DIM_NAMES, self.dims))
        d["c"] = self.confidence
        d["judge_id"] = self.judge_id
        return d


ZERO_REWARD = (0, 0, 0, 0, 0)


@runtime_checkable
class RewardJudge(Protocol):
    judge_id: str

    def evaluate(self, user_request: str, action_trajectory: str, window: RewardWindow) -> RewardVector: ...


def collect_window(session, turn_index: int, config: KernelConfig) -> RewardWindow:
    """Up to window_h messages strictly after the turn, in transcript order.

    `session` is any object exposing entries_after_turn(turn_index, limit),
    which must raise NotFoundError for an unknown turn.
    """
    texts = session.entries_after_turn(turn_index, limit=config.window_h)
    return RewardWindow(turn_index=turn_index, messages=tuple(texts))


def judge_turn(judge: RewardJudge, turn: InteractionTurn, window: RewardWindow) -> RewardVector:
    """Invoke the judge contract; failures never leave a partial reward.

    A judge crash, or a judge emitting out-of-range dimension values, raises
    JudgeError carrying the judge id; the turn stays unrewarded and can be
    retried. Out-of-range confidence is clamped by RewardVector itself.
    """
    try:
        vec = judge.evaluate(turn.user_request, turn.action_trajectory, window)
    except Exception as exc:
        raise JudgeError(getattr(judge, "judge_id", "?"), str(exc)) from exc
    if not isinstance(vec, RewardVector):
        raise JudgeError(getattr(judge, "judge_id", "?"), "judge did not return a RewardVector")
    return vec


def scalarize(r: RewardVector, lambda_weights) -> float:
    if len(lambda_weights) != N_REWARD_DIMS:
        raise ValidationError("lambda", f"expected {N_REWARD_DIMS} weights")
    return float(sum(w * v for w, v in zip(lambda_weights, r.dims)))


_MARKER = re.compile(
    r"FB:out=([+-]?1|0),int=([+-]?1|0),exe=([+-]?1|0),orc=([+-]?1|0),exp=([+-]?1|0),"
    r"c=([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)"
)


class MarkerJudge:
    """Deterministic judge reading an explicit feedback marker.

    Grammar: FB:out=<v>,int=<v>,exe=<v>,orc=<v>,exp=<v>,c=<float> with
    v in {-1, 0, +1}. The first marker found in the window wins; a window
    with no marker means no signal: zero reward at zero confidence.
    """

    judge_id = "marker"

    def evaluate(self, user_request: str, action_trajectory: str, window: RewardWindow) -> RewardVector:
        for msg in window.messages:
            m = _MARKER.search(msg)
            if m:
                dims = tuple(int(m.group(i)) for i in range(1, 6))
                return RewardVector(dims=dims, confidence=float(m.group(6)), judge_id=self.judge_id)
        return RewardVector(dims=ZERO_REWARD, confidence=0.0, judge_id=self.judge_id)


class BenchmarkJudge:
    """Maps explicit pass/fail verdicts to fixed reward rows.

    Verdict table: a window message containing "VERDICT:pass" yields
    (+1, 0, +1, 0, 0) at confidence 1; "VERDICT:fail" yields (-1, 0, -1, 0, 0)
    at confidence 1; no verdict yields zeros at confidence 0. The first
    verdict found wins. Outcome and execution quality are the only dimensions
    a bare verdict can speak to.
    """

    judge_id = "benchmark"

    def evaluate(self, user_request: str, action_trajectory: str, window: RewardWindow) -> RewardVector:
        for msg in window.messages:
            if "VERDICT:pass" in msg:
                return RewardVector(dims=(1, 0, 1, 0, 0), confidence=1.0, judge_id=self.judge_id)
            if "VERDICT:fail" in msg:
                return RewardVector(dims=(-1, 0, -1, 0, 0), confidence=1.0, judge_id=self.judge_id)
        return RewardVector(dims=ZERO_REWARD, confidence=0.0, judge_id=self.judge_id)
