"""Deterministic discrete-event loop tying roles, network and oracle together.

Everything random comes from generators seeded by the config, and every tie
in the event heap is broken by insertion order, so a (config, seed) pair
always produces the same trace.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import random
from dataclasses import dataclass, field

from ..cluster import build_cluster
from ..core import KEYSET, BallotKind, CmdSequence, CommandId, CommutativityOracle, eq_prefix
from ..crypto import check_proven_cert, make_provider
from ..leader import NotLeader
from ..learner import Learner
from ..wire import (
    ACCEPTORS,
    LEARNERS,
    PROPOSERS,
    BallotMsg,
    CheckpointAck,
    Fast,
    P1a,
    P1b,
    P2aClassic,
    P2aFast,
    P2b,
    P2bUniv,
    Suspicion,
    Verify,
    ViewChange,
    decode,
    encode,
    tag_name,
)
from .config import Action, SimConfig
from .network import Network
from .oracle import CERT_AUDIT, CONSISTENCY, InvariantOracle, Verdict, audit_certs
from .strategies import acceptor_class, leader_class, proposer_class

log = logging.getLogger("bgplab.sim")

ACCEPTOR_MSGS = (P1a, Fast, Verify, P2aClassic, P2aFast, P2b, Suspicion, ViewChange, CheckpointAck)

DELIVER, ACTION, TIMER = 0, 1, 2


@dataclass(frozen=True)
class LearnEvent:
    command: CommandId
    learner: int
    step: int
    depth: int
    path: str  # fast | classic | univ-fast | univ-classic
    quorum: int


@dataclass
class RunResult:
    config: SimConfig
    verdict: Verdict
    trace: list
    stats: dict = field(default_factory=dict)
    learns: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict.ok

    def trace_text(self) -> str:
        return "\n".join(self.trace) + "\n"

    def trace_digest(self) -> str:
        return hashlib.sha256(self.trace_text().encode()).hexdigest()


def _commutativity(cfg: SimConfig) -> CommutativityOracle:
    if cfg.commutativity == "keyset":
        return KEYSET
    pairs = []
    for a, b in cfg.interfering:
        pa, sa = a.split(".")
        pb, sb = b.split(".")
        pairs.append((CommandId(int(pa), int(sa)), CommandId(int(pb), int(sb))))
    return CommutativityOracle.explicit(pairs)


class Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.net_rng = random.Random(f"net|{cfg.seed}")
        self.wl_rng = random.Random(f"workload|{cfg.seed}")
        self.net = Network(cfg.delay, self.net_rng)
        provider = make_provider(cfg.provider, cfg.seed)
        self.cluster, keys = build_cluster(
            cfg.n, cfg.f, cfg.proposer_ids, cfg.learner_ids, provider,
            _commutativity(cfg), cfg.leader_cert_threshold,
        )
        byz = cfg.byzantine_map
        self.byz = byz
        self.acceptors = {}
        self.leaders = {}
        for pid in range(cfg.n):
            a = acceptor_class(byz.get(pid, ()))(pid, self.cluster, keys[pid])
            a.byz_seed = cfg.seed
            self.acceptors[pid] = a
            self.leaders[pid] = leader_class(byz.get(pid, ()))(pid, self.cluster, keys[pid])
        self.proposers = {pid: proposer_class(byz.get(pid, ()))(pid, self.cluster, keys[pid])
                          for pid in cfg.proposer_ids}
        self.learners = {pid: Learner(pid, self.cluster, keys[pid]) for pid in cfg.learner_ids}
        self.silent = {pid for pid, s in byz.items() if "silent" in s}
        self.crashed = set()
        self.inv = InvariantOracle(self.cluster.oracle)

        self.heap = []
        self._seq = 0
        self._live_events = 0
        self.now = 0
        self.step = 0
        self.trace = []
        self._state = b"\x00" * 32
        self.learns = []
        self.required = set()
        self._learned_by = {}
        self._checkpoints = set()
        self._note_marks = {}
        self._last_ballot_progress = -1
        self._monitor = {}
        self._progress_at = 0
        self._monitor_every = max(1, cfg.progress_timeout // 4)
        self._busy_since = None
        self.certs = {}
        self.stats = {
            "delivered": 0, "dropped": 0, "by_tag": {}, "leader_suspected_notes": 0,
            "nonext_delivered": 0, "nonext_rejected": 0, "incomparable_proven": 0,
            "ballots": 0, "views_adopted": [], "checkpoint_notes": [],
        }

    # -- process classification ---------------------------------------------

    def correct(self, pid) -> bool:
        return pid not in self.byz and pid not in self.crashed

    def alive(self, pid) -> bool:
        return pid not in self.crashed and pid not in self.silent

    def correct_learners(self):
        return [pid for pid in self.learners if self.correct(pid)]

    def system_view(self) -> int:
        views = [a.view for pid, a in self.acceptors.items() if self.correct(pid)]
        return max(views, default=0)

    def current_leader(self):
        view = self.system_view()
        pid = self.cluster.leader_of(view)
        if not self.alive(pid):
            return None
        leader = self.leaders[pid]
        if leader.view != view:
            return None
        return leader

    # -- scheduling -----------------------------------------------------------

    def _push(self, time, kind, data):
        self._seq += 1
        if kind != TIMER:
            self._live_events += 1
        heapq.heappush(self.heap, (time, self._seq, kind, data))

    def _targets(self, to):
        if to == ACCEPTORS:
            return self.cluster.acceptors
        if to == LEARNERS:
            return self.cluster.learners
        if to == PROPOSERS:
            return self.cluster.proposers
        return (to,)

    def send(self, src, sends, depth):
        if src in self.silent or src in self.crashed:
            return
        for s in sends:
            msg = s.msg
            if self.cfg.codec_check and decode(encode(msg)) != msg:
                raise AssertionError(f"codec round trip changed {tag_name(msg)}")
            if isinstance(msg, (P2b, P1b)) and msg.proofs.value:
                c = msg.proofs
                key = (c.ballot, c.base, c.value.items, tuple(sorted(c.proofs.items())))
                self.certs.setdefault(key, c)
            for dst in self._targets(s.to):
                for _ in range(self.net.copies(self.now)):
                    at = self.net.arrival(self.now, src, dst, msg)
                    self._push(at, DELIVER, (src, dst, msg, depth))

    # -- trace ----------------------------------------------------------------

    def _record(self, line, summary):
        if not self.cfg.record_trace:
            return
        self._state = hashlib.sha256(self._state + summary.encode()).digest()
        self.trace.append(f"{self.step} {line}")
        self.trace.append(f"{self.step} state {self._state.hex()[:16]}")

    def _summary(self, pid) -> str:
        if pid in self.acceptors:
            a, ldr = self.acceptors[pid], self.leaders[pid]
            return (f"R{pid} v{a.view} b{a.bal_a.view}.{a.bal_a.number} "
                    f"va{','.join(map(str, (a.val_a or CmdSequence()).ids))} "
                    f"pr{','.join(map(str, a.proven.ids))} L{ldr.view}.{ldr.ballot_l}")
        if pid in self.learners:
            lr = self.learners[pid]
            return f"L{pid} {','.join(str(c.id) for c in lr.log)}"
        if pid in self.proposers:
            p = self.proposers[pid]
            return f"P{pid} {p.ballot_type} {p.next_seqno} {len(p.pending)}"
        return "-"

    # -- work accounting ------------------------------------------------------

    def outstanding(self) -> bool:
        n = len(self.correct_learners())
        if any(self._learned_by.get(cid, 0) < n for cid in self.required):
            return True
        for cid in self._checkpoints:
            if any(cid not in self.learners[l].executed_checkpoints for l in self.correct_learners()):
                return True
        return any(self.leaders[p].checkpoint_requested for p in self.leaders if self.alive(p))

    def progress(self) -> int:
        return sum(len(self.learners[l].log) for l in self.correct_learners())

    # -- notes from roles -------------------------------------------------------

    def _drain_notes(self, role, pid):
        mark = self._note_marks.get(id(role), 0)
        notes = role.notes
        if mark == len(notes):
            return
        self._note_marks[id(role)] = len(notes)
        for kind, detail in notes[mark:]:
            if kind == "checkpoint_proposed":
                self.inv.register(detail["command"])
                self._checkpoints.add(detail["command"].id)
            elif kind == "view_adopted" and role is self.leaders.get(pid) and detail.get("leader"):
                self.stats["views_adopted"].append(detail["view"])
                for p in self.proposers.values():
                    self.send(p.pid, p.on_new_view(detail["view"]), 1)
                self._push(self.now, ACTION, Action(self.now, "lead", (pid, detail["view"])))
            elif kind == "ByzantineLeaderSuspected":
                self.stats["leader_suspected_notes"] += 1
            elif kind == "incomparable_proven":
                self.stats["incomparable_proven"] += 1
            elif kind == "divergence" and self.correct(pid):
                self.inv.report(CONSISTENCY, self.step, f"learner {pid} merged a non-extension")
            elif kind.startswith("checkpoint") or kind.endswith("checkpoint") or kind == "discarded_stale":
                self.stats["checkpoint_notes"].append((self.step, pid, kind))

    # -- event handlers ---------------------------------------------------------

    def _deliver(self, src, dst, msg, depth):
        if not self.alive(dst):
            self.stats["dropped"] += 1
            return
        self.stats["delivered"] += 1
        tag = tag_name(msg)
        self.stats["by_tag"][tag] = self.stats["by_tag"].get(tag, 0) + 1
        out_depth = depth + 1
        if dst in self.acceptors:
            if isinstance(msg, ACCEPTOR_MSGS):
                role = self.acceptors[dst]
                probe = (isinstance(msg, P2aClassic) and src in self.byz
                         and "non-extension-leader" in self.byz[src] and self.correct(dst)
                         and not eq_prefix(role.proven, msg.value, self.cluster.oracle))
                out = role.handle(msg, src)
                if probe:
                    self.stats["nonext_delivered"] += 1
                    if role.val_a is not msg.value:
                        self.stats["nonext_rejected"] += 1
            else:
                role = self.leaders[dst]
                out = role.handle(msg, src)
            self.send(dst, out, out_depth)
            self._drain_notes(role, dst)
        elif dst in self.proposers:
            p = self.proposers[dst]
            if isinstance(msg, BallotMsg):
                # Commands start a fresh causal chain at their proposer.
                self.send(dst, p.on_ballot(msg.kind), 1)
        elif dst in self.learners:
            lr = self.learners[dst]
            before = len(lr.log)
            out = lr.handle(msg, src)
            self.send(dst, out, out_depth)
            self._drain_notes(lr, dst)
            if len(lr.log) != before:
                self._learned(dst, lr, before, msg, depth)
        self._record(f"{self.now} deliver {src}>{dst} {tag} d{depth}", self._summary(dst))

    def _learned(self, lid, lr, before, msg, depth):
        univ = isinstance(msg, P2bUniv)
        kind = "fast" if msg.ballot.kind == BallotKind.FAST else "classic"
        path = f"univ-{kind}" if univ else kind
        correct = self.correct(lid)
        for c in lr.log[before:]:
            self.learns.append(LearnEvent(c.id, lid, self.step, depth, path, lr.last_quorum))
            if correct:
                n = self._learned_by.get(c.id, 0) + 1
                self._learned_by[c.id] = n
                prop = self.proposers.get(c.id.proposer)
                if prop is not None and n == 1:
                    prop.acknowledge((c.id,))
        if correct:
            self._progress_at = self.now
            logs = {l: CmdSequence(self.learners[l].log) for l in self.correct_learners()}
            self.inv.observe(self.step, logs, changed=[lid])

    def _trigger(self, leader, kind):
        if leader is None:
            return
        try:
            out = leader.trigger_next_ballot(kind)
        except NotLeader:
            return
        self.stats["ballots"] += 1
        self.send(leader.pid, out, 1)
        self._drain_notes(leader, leader.pid)

    def _action(self, a: Action):
        verb = a.verb
        if verb == "ballot":
            self._trigger(self.current_leader(), a.args[0])
        elif verb == "lead":
            pid, view = a.args
            leader = self.current_leader()
            if leader is not None and leader.pid == pid and leader.view == view:
                self._trigger(leader, BallotKind.CLASSIC)
        elif verb == "inject":
            self._inject(a)
        elif verb == "crash":
            self.crashed.add(a.args[0])
        elif verb == "checkpoint":
            leader = self.current_leader()
            if leader is not None:
                leader.request_checkpoint()
                self._trigger(leader, BallotKind.CLASSIC)
        elif verb == "partition":
            self.net.partitions.append(a.args)
        elif verb == "hold":
            self.net.holds.append(a.args)
        detail = " ".join(str(x) for x in a.args + tuple(f"{k}={v}" for k, v in a.opts))
        self._record(f"{self.now} action {verb} {detail}".rstrip(), verb)

    def _inject(self, a: Action):
        index = int(a.opt("p", 0))
        if not 0 <= index < len(self.cluster.proposers):
            return
        pid = self.cluster.proposers[index]
        if not self.alive(pid):
            return
        p = self.proposers[pid]
        reads = tuple(k for k in a.opt("read", "").split("+") if k)
        writes = tuple(k for k in a.opt("write", "").split("+") if k)
        universal = a.opt("universal", "no") in ("yes", "true", "1")
        payload = a.opt("payload", f"cmd{p.next_seqno}").encode()
        out = p.on_command_request(payload, reads, writes, universal)
        cid = CommandId(pid, p.next_seqno - 1)
        c = p.pending[cid]
        if self.correct(pid):
            self.inv.register(c)
            self.required.add(cid)
        self.send(pid, out, 1)

    def _timer(self, name):
        if name == "monitor":
            self._progress_monitor()
            every = self._monitor_every
        elif name == "ballot":
            self._ballot_tick()
            every = self.cfg.ballot_period
        else:
            self._byzantine_tick()
            every = max(1, self.cfg.progress_timeout // 2)
        if self._live_events > 0 or self.outstanding():
            self._push(self.now + every, TIMER, name)

    def _progress_monitor(self):
        # An acceptor suspects once work has been stuck for a full timeout,
        # counted from the latest of: learner progress, the moment work became
        # outstanding, and its own last view change.
        busy = self.outstanding()
        if not busy:
            self._busy_since = None
        elif self._busy_since is None:
            self._busy_since = self.now
        for pid, a in self.acceptors.items():
            if not self.alive(pid) or getattr(a, "byzantine_tick", False):
                continue
            view, since = self._monitor.get(pid, (None, 0))
            if view != a.view:
                self._monitor[pid] = (a.view, self.now)
                continue
            if not busy:
                continue
            quiet_from = max(since, self._progress_at, self._busy_since)
            if self.now - quiet_from >= self.cfg.progress_timeout:
                self.send(pid, a.suspect_leader(), 1)
                self._drain_notes(a, pid)
        self._record(f"{self.now} timer monitor", f"monitor {self.progress()}")

    def _ballot_tick(self):
        now_progress = self.progress()
        if self.cfg.auto_ballot and self.outstanding():
            leader = self.current_leader()
            if leader is not None and (leader.kind == BallotKind.CLASSIC
                                       or leader.ballot_l == 0
                                       or now_progress == self._last_ballot_progress):
                self._trigger(leader, BallotKind.CLASSIC)
        self._last_ballot_progress = now_progress
        self._record(f"{self.now} timer ballot", f"ballot {now_progress}")

    def _byzantine_tick(self):
        for pid, a in self.acceptors.items():
            if getattr(a, "byzantine_tick", False) and self.alive(pid):
                self.send(pid, a.on_tick(), 1)
        self._record(f"{self.now} timer byzantine", "byzantine")

    # -- workload ---------------------------------------------------------------

    def _workload_actions(self):
        w = self.cfg.workload
        rng = self.wl_rng
        acts = []
        keys = [f"k{i}" for i in range(max(1, w.keys))]
        for i in range(w.commands):
            t = rng.randint(w.start, max(w.start, w.end))
            p = rng.randrange(len(self.cluster.proposers))
            if rng.random() < w.universal:
                opts = (("p", str(p)), ("universal", "yes"))
            else:
                write = rng.choice(keys)
                opts = [("p", str(p)), ("write", write)]
                if rng.random() < w.reads:
                    opts.append(("read", rng.choice(keys)))
                opts = tuple(sorted(opts))
            acts.append(Action(t, "inject", (), opts))
        return acts

    # -- main loop --------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        for a in sorted(list(cfg.script) + self._workload_actions(), key=lambda x: x.time):
            self._push(a.time, ACTION, a)
        self._push(self._monitor_every, TIMER, "monitor")
        self._push(cfg.ballot_period, TIMER, "ballot")
        if any(getattr(a, "byzantine_tick", False) for a in self.acceptors.values()):
            self._push(max(1, cfg.progress_timeout // 2), TIMER, "byzantine")
        stop = "quiescent"
        while self.heap:
            if self.step >= cfg.max_steps:
                stop = "max_steps"
                break
            time, _, kind, data = heapq.heappop(self.heap)
            if time > cfg.max_time:
                stop = "max_time"
                break
            self.now = time
            self.step += 1
            if kind == DELIVER:
                self._live_events -= 1
                self._deliver(*data)
            elif kind == ACTION:
                self._live_events -= 1
                self._action(data)
            else:
                self._timer(data)
        return self._finish(stop)

    def _finish(self, stop) -> RunResult:
        cfg = self.cfg
        valid = [c for c in self.certs.values()
                 if check_proven_cert(c, self.cluster.keyring, self.cluster.acceptors,
                                      self.cluster.f, self.cluster.oracle)]
        bad = audit_certs(valid, self.cluster.oracle)
        if bad is not None:
            self.inv.report(CERT_AUDIT, self.step, f"incomparable certificates {bad[0]!r} / {bad[1]!r}")
        leader_pid = self.cluster.leader_of(self.system_view())
        evaluable = (
            cfg.liveness == "auto"
            and self.correct(leader_pid)
            and self.now >= self.net.quiet_after()
            and (stop == "quiescent" or self.now >= self.net.model.synchronous_after)
        )
        if evaluable:
            logs = {l: CmdSequence(self.learners[l].log) for l in self.correct_learners()}
            self.inv.liveness(self.step, logs, sorted(self.required))
        stats = dict(self.stats)
        stats.update(
            stop=stop, steps=self.step, time=self.now, final_view=self.system_view(),
            final_leader=leader_pid, certs_seen=len(self.certs), certs_valid=len(valid),
            learned_lengths={l: len(self.learners[l].learned) for l in self.learners},
            log_lengths={l: len(self.learners[l].log) for l in self.learners},
            stored={p: self.acceptors[p].stored_len() for p in self.acceptors},
            required=len(self.required),
        )
        log.info("seed %d: %s after %d steps (%s)", cfg.seed,
                 "pass" if self.inv.verdict.ok else "FAIL", self.step, stop)
        for viol in self.inv.verdict.violations:
            log.debug("violation %s at step %d: %s", viol.prop, viol.step, viol.detail)
        if cfg.record_trace:
            v = self.inv.verdict
            self.trace.append(f"# verdict {'pass' if v.ok else 'fail'}")
            for viol in v.violations:
                self.trace.append(f"# violation {viol.prop} step={viol.step} {viol.detail}")
            self.trace.append(f"# liveness {'evaluated' if v.liveness_evaluated else 'not-evaluated'}")
            self.trace.append(f"# steps {self.step} stop={stop} final_view={stats['final_view']}")
        return RunResult(cfg, self.inv.verdict, self.trace, stats, self.learns)


def run(cfg: SimConfig) -> RunResult:
    return Simulation(cfg).run()
