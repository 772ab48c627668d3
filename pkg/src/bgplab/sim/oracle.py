"""Global invariant checks over learner execution histories.

The oracle sees only what an outside observer could: each correct learner's
execution log (every command it executed, in order, across checkpoints), the
registry of commands that proposers actually issued, and the certificates
that crossed the wire. It never asks a role whether the role thinks things
went well.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from ..core import KEYSET, CmdSequence, CommutativityOracle, eq_prefix, extensible

CONSISTENCY = "consistency"
NONTRIVIALITY = "nontriviality"
STABILITY = "stability"
LIVENESS = "liveness"
CERT_AUDIT = "cert-audit"


@dataclass(frozen=True)
class Violation:
    prop: str
    step: int
    detail: str

    def to_dict(self):
        return {"property": self.prop, "step": self.step, "detail": self.detail}


@dataclass
class Verdict:
    violations: list = field(default_factory=list)
    liveness_evaluated: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def failed(self, prop) -> bool:
        return any(v.prop == prop for v in self.violations)

    def add(self, prop, step, detail):
        # one entry per property is enough to fail a run; keep the first
        if not self.failed(prop):
            self.violations.append(Violation(prop, step, detail))


class InvariantOracle:
    def __init__(self, oracle: CommutativityOracle = KEYSET):
        self.oracle = oracle
        self.registry = {}
        self.snapshots = {}
        self.verdict = Verdict()

    def register(self, command) -> None:
        self.registry[command.id] = command

    def observe(self, step: int, logs: dict, changed=None) -> None:
        """Check every invariant that involves a learner whose log changed."""
        changed = list(logs) if changed is None else list(changed)
        for lid in changed:
            log = logs[lid]
            self._nontrivial(step, lid, log)
            self._stable(step, lid, log)
        for lid in changed:
            for other in logs:
                if other != lid and not extensible(logs[lid], logs[other], self.oracle):
                    self.verdict.add(CONSISTENCY, step, f"learners {lid} and {other} diverge")

    def _nontrivial(self, step, lid, log):
        for c in log:
            if self.registry.get(c.id) != c:
                self.verdict.add(NONTRIVIALITY, step, f"learner {lid} executed unproposed {c!r}")
                return

    def _stable(self, step, lid, log):
        prev = self.snapshots.get(lid)
        if prev is not None and not eq_prefix(prev, log, self.oracle):
            self.verdict.add(STABILITY, step, f"learner {lid} rewrote its history")
        self.snapshots[lid] = log

    def report(self, prop, step, detail) -> None:
        self.verdict.add(prop, step, detail)

    def liveness(self, step: int, logs: dict, required) -> None:
        self.verdict.liveness_evaluated = True
        for lid, log in logs.items():
            missing = [cid for cid in required if cid not in log.id_set()]
            if missing:
                self.verdict.add(LIVENESS, step, f"learner {lid} never learned {len(missing)} command(s)")
                return


def check_history(histories: dict, registry=None, oracle: CommutativityOracle = KEYSET) -> Verdict:
    """Run the safety checks over a recorded list of log snapshots per learner.

    ``histories`` maps learner id -> list of CmdSequence snapshots in time
    order. Used by the CLI ``check`` command on hand-built fixtures.
    """
    inv = InvariantOracle(oracle)
    if registry is not None:
        for c in registry:
            inv.register(c)
    else:
        for snaps in histories.values():
            for s in snaps:
                for c in s:
                    inv.register(c)
    current = {lid: CmdSequence() for lid in histories}
    depth = max((len(s) for s in histories.values()), default=0)
    for step in range(depth):
        changed = []
        for lid, snaps in histories.items():
            if step < len(snaps):
                current[lid] = snaps[step]
                changed.append(lid)
        inv.observe(step, current, changed)
    return inv.verdict


def audit_certs(certs, oracle: CommutativityOracle = KEYSET):
    """Certificates at one (ballot, base) must all be eq-prefix comparable.

    ``certs`` is an iterable of already validated ProvenCerts. Returns the first
    offending pair or None.
    """
    groups = {}
    for cert in certs:
        groups.setdefault((cert.ballot, cert.base), {})[cert.value.items] = cert.value
    for values in groups.values():
        for a, b in combinations(values.values(), 2):
            if not (eq_prefix(a, b, oracle) or eq_prefix(b, a, oracle)):
                return a, b
    return None
