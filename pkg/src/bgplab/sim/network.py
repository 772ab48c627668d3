"""Delay models and scripted interference for the simulated links.

Links are authenticated and eventually reliable: a message can be late,
reordered or duplicated, never dropped or altered. Partitions and holds are
finite windows; anything caught in one is released when the window closes.
"""

from __future__ import annotations

import random

from ..wire import tag_name
from .config import DelayModel


class Network:
    def __init__(self, model: DelayModel, rng: random.Random):
        self.model = model
        self.rng = rng
        self.partitions = []  # (left, right, until)
        self.holds = []  # (tag, dst, where, until)

    def synchronous_at(self, now: int) -> bool:
        return now >= self.model.synchronous_after

    def _base_delay(self, now: int) -> int:
        m = self.model
        if m.kind == "adversarial" and now < m.gst and self.rng.random() < m.p_spike:
            return self.rng.randint(m.hi, max(m.hi, m.spike))
        return self.rng.randint(m.lo, m.hi)

    def copies(self, now: int) -> int:
        m = self.model
        if m.kind == "adversarial" and now < m.gst and self.rng.random() < m.dup:
            return 2
        return 1

    def _release(self, now, src, dst, msg) -> int:
        """Earliest time scripted windows let this message through."""
        at = now
        for left, right, until in self.partitions:
            if now < until and ((src in left and dst in right) or (src in right and dst in left)):
                at = max(at, until)
        for tag, hdst, where, until in self.holds:
            if now < until and dst == hdst and tag_name(msg) == tag and matches(where, msg):
                at = max(at, until)
        return at

    def arrival(self, now: int, src, dst, msg) -> int:
        return self._release(now, src, dst, msg) + self._base_delay(now)

    def quiet_after(self) -> int:
        """Time from which no scripted window is active."""
        ends = [u for *_, u in self.partitions] + [u for *_, u in self.holds]
        return max(ends, default=0)


def matches(where: str, msg) -> bool:
    if where == "any":
        return True
    value = getattr(msg, "value", None)
    if value is None:
        return False
    has = any(c.is_checkpoint for c in value)
    if where == "no-checkpoint":
        return not has
    if not value:
        return False
    if where == "tail-checkpoint":
        return value[-1].is_checkpoint and len(value) > 1
    if where == "head-checkpoint":
        return value[0].is_checkpoint and len(value) > 1
    return False

