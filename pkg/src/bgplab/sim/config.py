"""Simulation configuration and the scenario text format.

A scenario file is ``key = value`` lines, ``#`` comments, and an optional
``[script]`` section whose lines read ``step <t>: <action>``. Script steps are
virtual-time ticks. The full grammar is in docs/formats.md.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass

from ..cluster import ConfigError

STRATEGIES = (
    "silent",
    "omit-p1b-commands",
    "equivocate-leader",
    "non-extension-leader",
    "double-vote-acceptor",
    "false-suspector",
    "forge-command",
)


@dataclass(frozen=True)
class DelayModel:
    kind: str = "uniform"  # "uniform" or "adversarial"
    lo: int = 1
    hi: int = 10
    # adversarial only: spike ceiling, spike and duplicate probabilities, and
    # the global stabilization time after which delays stay within [lo, hi].
    spike: int = 80
    p_spike: float = 0.2
    dup: float = 0.05
    gst: int = 400

    def __post_init__(self):
        if self.kind not in ("uniform", "adversarial"):
            raise ConfigError(f"unknown delay model {self.kind!r}")
        if not 0 <= self.lo <= self.hi:
            raise ConfigError(f"bad delay bounds {self.lo}..{self.hi}")

    @property
    def synchronous_after(self) -> int:
        return 0 if self.kind == "uniform" else self.gst


@dataclass(frozen=True)
class Workload:
    """Seeded random command generator; ``commands = 0`` disables it."""

    commands: int = 0
    keys: int = 3
    universal: float = 0.0
    reads: float = 0.3
    start: int = 1
    end: int = 100


@dataclass(frozen=True)
class Action:
    time: int
    verb: str
    args: tuple = ()
    opts: tuple = ()

    def opt(self, name, default=None):
        return dict(self.opts).get(name, default)


@dataclass(frozen=True)
class SimConfig:
    n: int = 4
    f: int = 1
    proposers: int = 1
    learners: int = 2
    seed: int = 0
    max_steps: int = 50_000
    max_time: int = 5_000
    progress_timeout: int = 120
    ballot_period: int = 40
    auto_ballot: bool = True
    delay: DelayModel = DelayModel()
    byzantine: tuple = ()  # ((pid, (strategy, ...)), ...)
    script: tuple = ()
    workload: Workload = Workload()
    commutativity: str = "keyset"
    interfering: tuple = ()  # explicit mode: pairs of "p.s" ids
    leader_cert_threshold: str = "quorum"
    provider: str = "deterministic"
    liveness: str = "auto"  # auto | off
    codec_check: bool = False
    record_trace: bool = True

    def __post_init__(self):
        if self.f < 0 or self.n < 3 * self.f + 1:
            raise ConfigError(f"need N >= 3f+1 acceptors, got N={self.n}, f={self.f}")
        if self.proposers < 1 or self.learners < 1:
            raise ConfigError("need at least one proposer and one learner")
        if self.leader_cert_threshold not in ("quorum", "f+1"):
            raise ConfigError(f"unknown leader_cert_threshold {self.leader_cert_threshold!r}")
        if self.commutativity not in ("keyset", "explicit"):
            raise ConfigError(f"unknown commutativity mode {self.commutativity!r}")
        if self.provider not in ("deterministic", "ed25519"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.liveness not in ("auto", "off"):
            raise ConfigError(f"unknown liveness mode {self.liveness!r}")
        total = self.n + self.proposers + self.learners
        for pid, names in self.byzantine:
            if not 0 <= pid < total:
                raise ConfigError(f"byzantine process {pid} does not exist")
            for s in names:
                if s not in STRATEGIES:
                    raise ConfigError(f"unknown strategy {s!r}")
        byz_replicas = sum(1 for pid, _ in self.byzantine if pid < self.n)
        if byz_replicas > self.f:
            raise ConfigError(f"{byz_replicas} Byzantine replicas exceed f={self.f}")
        for a in self.script:
            if a.verb == "checkpoint" and self.learners < self.n - self.f:
                raise ConfigError("a checkpoint needs at least N-f learners to acknowledge it")

    # process id layout
    @property
    def proposer_ids(self) -> tuple:
        return tuple(range(self.n, self.n + self.proposers))

    @property
    def learner_ids(self) -> tuple:
        return tuple(range(self.n + self.proposers, self.n + self.proposers + self.learners))

    @property
    def byzantine_map(self) -> dict:
        return {pid: tuple(names) for pid, names in self.byzantine}

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


# --- parsing ---------------------------------------------------------------

_INT_KEYS = {
    "n": "n", "n_acceptors": "n", "f": "f", "proposers": "proposers", "n_proposers": "proposers",
    "learners": "learners", "n_learners": "learners", "seed": "seed", "max_steps": "max_steps",
    "max_time": "max_time", "progress_timeout": "progress_timeout", "ballot_period": "ballot_period",
}
_STR_KEYS = {"commutativity", "leader_cert_threshold", "provider", "liveness"}
_BOOL_KEYS = {"auto_ballot", "codec_check", "record_trace"}
_STEP = re.compile(r"^step\s+(\d+)\s*:\s*(.+)$")


def _int(key, text):
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _bool(key, text):
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected on/off, got {text!r}")


def _options(tokens, key):
    opts = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"{key}: expected name=value, got {tok!r}")
        k, v = tok.split("=", 1)
        opts[k] = v
    return opts


def parse_delay(text: str) -> DelayModel:
    parts = text.split()
    if len(parts) < 3:
        raise ConfigError(f"delay: expected '<model> <lo> <hi> [opts]', got {text!r}")
    kind, lo, hi = parts[0], _int("delay", parts[1]), _int("delay", parts[2])
    opts = _options(parts[3:], "delay")
    kw = {}
    for name, conv in (("spike", int), ("p_spike", float), ("dup", float), ("gst", int)):
        if name in opts:
            try:
                kw[name] = conv(opts.pop(name))
            except ValueError:
                raise ConfigError(f"delay: bad value for {name}") from None
    if opts:
        raise ConfigError(f"delay: unknown options {sorted(opts)}")
    return DelayModel(kind, lo, hi, **kw)


def parse_workload(text: str) -> Workload:
    opts = _options(text.split(), "workload")
    kw = {}
    for name, conv in (("commands", int), ("keys", int), ("universal", float), ("reads", float)):
        if name in opts:
            kw[name] = conv(opts.pop(name))
    if "window" in opts:
        lo, _, hi = opts.pop("window").partition("..")
        kw["start"], kw["end"] = _int("window", lo), _int("window", hi)
    if opts:
        raise ConfigError(f"workload: unknown options {sorted(opts)}")
    return Workload(**kw)


def parse_byzantine(text: str) -> tuple:
    roster = []
    for entry in filter(None, (e.strip() for e in text.split(","))):
        pid, sep, names = entry.partition(":")
        if not sep:
            raise ConfigError(f"byzantine: expected pid:strategy, got {entry!r}")
        strategies = tuple(s.strip() for s in names.split("+") if s.strip())
        for s in strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        roster.append((_int("byzantine", pid.strip()), strategies))
    return tuple(sorted(roster))


def parse_action(time: int, text: str) -> Action:
    tokens = text.split()
    verb, rest = tokens[0], tokens[1:]
    if verb == "ballot":
        if rest not in (["fast"], ["classic"]):
            raise ConfigError(f"ballot: expected fast or classic, got {' '.join(rest)!r}")
        return Action(time, verb, (rest[0],))
    if verb == "inject":
        opts = _options(rest, "inject")
        unknown = set(opts) - {"p", "read", "write", "universal", "payload"}
        if unknown:
            raise ConfigError(f"inject: unknown options {sorted(unknown)}")
        return Action(time, verb, (), tuple(sorted(opts.items())))
    if verb == "crash":
        if len(rest) != 1:
            raise ConfigError("crash: expected one process id")
        return Action(time, verb, (_int("crash", rest[0]),))
    if verb == "checkpoint":
        return Action(time, verb)
    if verb == "partition":
        # partition 0,1 | 2,3 until 50
        m = re.match(r"^([\d,\s]+)\|([\d,\s]+)until\s+(\d+)$", " ".join(rest))
        if not m:
            raise ConfigError(f"partition: cannot parse {text!r}")
        left = tuple(_int("partition", x) for x in m.group(1).replace(",", " ").split())
        right = tuple(_int("partition", x) for x in m.group(2).replace(",", " ").split())
        return Action(time, verb, (left, right, int(m.group(3))))
    if verb == "hold":
        # hold P2B to 9 [where tail-checkpoint] until 400
        m = re.match(r"^(\w+)\s+to\s+(\d+)(?:\s+where\s+([\w-]+))?\s+until\s+(\d+)$", " ".join(rest))
        if not m:
            raise ConfigError(f"hold: cannot parse {text!r}")
        where = m.group(3) or "any"
        if where not in ("any", "tail-checkpoint", "head-checkpoint", "no-checkpoint"):
            raise ConfigError(f"hold: unknown predicate {where!r}")
        return Action(time, verb, (m.group(1).upper(), int(m.group(2)), where, int(m.group(4))))
    raise ConfigError(f"unknown script action {verb!r}")


def parse_scenario(text: str, **overrides) -> SimConfig:
    kw = {}
    script = []
    in_script = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[script]":
            in_script = True
            continue
        if in_script:
            m = _STEP.match(line)
            if not m:
                raise ConfigError(f"line {lineno}: expected 'step <n>: <action>'")
            script.append(parse_action(int(m.group(1)), m.group(2)))
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key in _INT_KEYS:
            kw[_INT_KEYS[key]] = _int(key, value)
        elif key in _STR_KEYS:
            kw[key] = value
        elif key in _BOOL_KEYS:
            kw[key] = _bool(key, value)
        elif key == "delay":
            kw["delay"] = parse_delay(value)
        elif key == "workload":
            kw["workload"] = parse_workload(value)
        elif key == "byzantine":
            kw["byzantine"] = parse_byzantine(value)
        elif key == "interfering":
            kw["interfering"] = tuple(
                tuple(p.strip().split("~")) for p in value.split(",") if p.strip()
            )
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    kw["script"] = tuple(sorted(script, key=lambda a: a.time))
    kw.update(overrides)
    return SimConfig(**kw)


def load_scenario(path, **overrides) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), **overrides)
