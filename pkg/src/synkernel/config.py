"""Kernel configuration: learning hyperparameters, retrieval knobs, and their ranges.

The config file is flat ``key = value`` text. Every field has a documented
default; every range violation is rejected at parse time with the offending
field named.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

# Number of reward dimensions. Fixed by the reward model: outcome, intent
# understanding, execution quality, orchestration quality, expression quality.
N_REWARD_DIMS = 5

SEED_Q_MODES = ("own_reward", "zero")


@dataclass(frozen=True)
class KernelConfig:
    """All learning and retrieval hyperparameters in one validated value object."""

    lambda_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    alpha: float = 0.3
    window_h: int = 5
    w_s: float = 1.0
    w_q: float = 1.0
    ucb_c: float = 0.5
    epsilon: float = 0.1
    top_k: int = 3
    shortlist_m: int = 16
    tau_intent: float = 0.85
    tau_script: float = 0.85
    rng_seed: int = 0
    seed_q: str = "own_reward"
    mailbox_retries: int = 0

    def __post_init__(self):
        lw = tuple(float(v) for v in self.lambda_weights)
        object.__setattr__(self, "lambda_weights", lw)
        if len(lw) != N_REWARD_DIMS:
            raise ValidationError("lambda", f"expected {N_REWARD_DIMS} weights, got {len(lw)}")
        if any(v < 0 for v in lw):
            raise ValidationError("lambda", "weights must be non-negative")
        if sum(lw) <= 0:
            raise ValidationError("lambda", "weights must sum to a positive value")
        if not (0.0 < self.alpha <= 1.0):
            raise ValidationError("alpha", f"must be in (0, 1], got {self.alpha}")
        if self.window_h < 1:
            raise ValidationError("window_h", f"must be >= 1, got {self.window_h}")
        if self.w_s < 0:
            raise ValidationError("w_s", "must be non-negative")
        if self.w_q < 0:
            raise ValidationError("w_q", "must be non-negative")
        if self.ucb_c < 0:
            raise ValidationError("ucb_c", "must be non-negative")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValidationError("epsilon", f"must be in [0, 1], got {self.epsilon}")
        if self.top_k < 1:
            raise ValidationError("top_k", f"must be >= 1, got {self.top_k}")
        if self.shortlist_m < self.top_k:
            raise ValidationError(
                "shortlist_m", f"must be >= top_k ({self.top_k}), got {self.shortlist_m}"
            )
        for name in ("tau_intent", "tau_script"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(name, f"must be in [0, 1], got {v}")
        if self.seed_q not in SEED_Q_MODES:
            raise ValidationError("seed_q", f"must be one of {SEED_Q_MODES}, got {self.seed_q!r}")
        if self.mailbox_retries < 0:
            raise ValidationError("mailbox_retries", "must be non-negative")

    def replace(self, **changes) -> "KernelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda_weights"] = list(self.lambda_weights)
        return d


_INT_KEYS = {"window_h", "top_k", "shortlist_m", "rng_seed", "mailbox_retries"}
_FLOAT_KEYS = {"alpha", "w_s", "w_q", "ucb_c", "epsilon", "tau_intent", "tau_script"}
_STR_KEYS = {"seed_q"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "lambda":
        parts = [p.strip() for p in raw.split(",")]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise ValidationError("lambda", f"expected comma-separated reals, got {raw!r}")
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ValidationError(key, f"expected an integer, got {raw!r}")
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError:
            raise ValidationError(key, f"expected a real, got {raw!r}")
    if key in _STR_KEYS:
        return raw
    raise ValidationError(key, "unknown configuration key")


def load_config(path: Path | str | None = None) -> KernelConfig:
    """Load a config file, applying defaults for absent keys.

    A missing file yields the full default config. Malformed lines, unknown
    keys, and out-of-range values raise ValidationError naming the field.
    """
    values: dict = {}
    if path is not None:
        path = Path(path)
        if path.exists():
            for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValidationError(None, f"line {lineno}: expected 'key = value', got {line!r}")
                key, raw = line.split("=", 1)
                key = key.strip()
                parsed = _parse_value(key, raw)
                field = "lambda_weights" if key == "lambda" else key
                values[field] = parsed
    return KernelConfig(**values)


def dump_config(config: KernelConfig) -> str:
    """Render a config in the flat key = value file format."""
    lines = [
        "lambda = " + ",".join(repr(v) for v in config.lambda_weights),
        f"alpha = {config.alpha!r}",
        f"window_h = {config.window_h}",
        f"w_s = {config.w_s!r}",
        f"w_q = {config.w_q!r}",
        f"ucb_c = {config.ucb_c!r}",
        f"epsilon = {config.epsilon!r}",
        f"top_k = {config.top_k}",
        f"shortlist_m = {config.shortlist_m}",
        f"tau_intent = {config.tau_intent!r}",
        f"tau_script = {config.tau_script!r}",
        f"rng_seed = {config.rng_seed}",
        f"seed_q = {config.seed_q}",
        f"mailbox_retries = {config.mailbox_retries}",
    ]
    return "\n".join(lines) + "\n"
