"""Logical clock: integer ticks, injected everywhere, wall time never enters the kernel."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass
class LogicalClock:
    now: int = 0

    def advance(self, dt: int) -> int:
        if dt < 0:
            raise ValidationError("dt", "clock cannot move backwards")
        self.now += dt
        return self.now

    def advance_to(self, ts: int) -> int:
        if ts < self.now:
            raise ValidationError("ts", f"clock is at {self.now}, cannot rewind to {ts}")
        self.now = ts
        return self.now
