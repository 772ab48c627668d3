"""Leader: ballot triggering, phase 1 collection and the phase 2a value rule.

The phase 2a value is built from three parts, in order: the largest proven
sequence relayed in the phase 1b quorum, the commands acceptors voted for
but never saw proven, and the proposals collected since the last ballot.
"""

from __future__ import annotations

from .cluster import Cluster
from .core import (
    EMPTY,
    Ballot,
    BallotKind,
    CmdSequence,
    Command,
    CommandId,
    IncomparableProvenSequences,
    checkpoint_generation,
    checkpoint_payload,
    concat,
    equivalent,
    is_universally_commutative,
    largest_seq,
    remove_duplicates,
)
from .crypto import KeyPair, LeaderCert, check_leader_cert, check_proven_cert, sign_command
from .wire import (
    ACCEPTORS,
    PROPOSERS,
    BallotMsg,
    Fast,
    Leader as LeaderMsg,
    P1a,
    P1b,
    P2aClassic,
    Propose,
    Send,
)


class NotLeader(Exception):
    pass


def epoch_of(s: CmdSequence) -> int:
    """Checkpoint generation a proven sequence belongs to (0 before any checkpoint)."""
    if s and s[0].is_checkpoint:
        return checkpoint_generation(s[0])
    return 0


class Leader:
    def __init__(self, pid: int, cluster: Cluster, keys: KeyPair):
        self.pid = pid
        self.cluster = cluster
        self.keys = keys
        self.ballot_l = 0
        self.kind = BallotKind.CLASSIC
        self.view = 0
        self.proposals = EMPTY
        self.accepted = {}
        self.notAccepted = {}
        self._fired = set()
        self._cert_ballot = {}
        self.last_largest = EMPTY
        self.checkpoint_requested = False
        self._seqno = 1
        self.notes = []

    @property
    def is_leader(self) -> bool:
        return self.cluster.leader_of(self.view) == self.pid

    @property
    def ballot(self) -> Ballot:
        return Ballot(self.view, self.ballot_l, self.kind)

    def note(self, kind, **detail):
        self.notes.append((kind, detail))

    def handle(self, msg, src) -> list:
        if isinstance(msg, Propose):
            return self.on_propose(msg.prop, src)
        if isinstance(msg, P1b):
            return self.on_p1b(msg, src)
        if isinstance(msg, LeaderMsg):
            self.on_leader_cert(msg.view, msg.proofs)
            return []
        return []

    def on_leader_cert(self, view_a: int, proofs) -> bool:
        if view_a <= self.view:
            return False
        cert = LeaderCert(view_a, proofs)
        if not check_leader_cert(cert, self.cluster.keyring, self.cluster.acceptors,
                                 self.cluster.leader_threshold):
            self.note("invalid_leader_cert", view=view_a)
            return False
        self.view = view_a
        self.note("view_adopted", view=view_a, leader=self.is_leader)
        return True

    def trigger_next_ballot(self, kind) -> list:
        if not self.is_leader:
            raise NotLeader(f"process {self.pid} does not lead view {self.view}")
        self.kind = BallotKind(kind)
        self.ballot_l += 1
        b = self.ballot
        out = [Send(PROPOSERS, BallotMsg(self.kind))]
        if self.kind == BallotKind.FAST:
            out.append(Send(ACCEPTORS, Fast(b, self.view)))
        else:
            out.append(Send(ACCEPTORS, P1a(b, self.view)))
        self.note("ballot", ballot=b)
        return out

    def on_propose(self, prop: CmdSequence, src=None) -> list:
        keyring = self.cluster.keyring
        good = CmdSequence(c for c in prop if keyring.command_ok(c) and not c.is_checkpoint)
        if len(good) != len(prop):
            self.note("bad_command_dropped", src=src)
        if not good:
            return []
        if is_universally_commutative(good):
            if not self.is_leader:
                return []
            return [Send(ACCEPTORS, P2aClassic(self.ballot, self.view, good))]
        self.proposals = concat(self.proposals, CmdSequence(c for c in good if not c.universal))
        return []

    def _p1b_valid(self, m: P1b) -> bool:
        if not m.proven:
            return True
        cluster = self.cluster
        cert = m.proofs
        return (
            equivalent(cert.value, m.proven, cluster.oracle)
            and check_proven_cert(cert, cluster.keyring, cluster.acceptors, cluster.f, cluster.oracle)
            and cluster.keyring.sequence_ok(m.proven)
        )

    def on_p1b(self, m: P1b, src: int) -> list:
        b = self.ballot
        if m.ballot != b or self.kind != BallotKind.CLASSIC or src not in self.cluster.acceptors:
            return []
        accepted = self.accepted.setdefault(b, {})
        if src in accepted:
            return []
        if not self._p1b_valid(m):
            self.note("invalid_p1b", src=src, ballot=b)
            return []
        keyring = self.cluster.keyring
        accepted[src] = m.proven
        self._cert_ballot.setdefault(b, {})[src] = m.proofs.ballot if m.proven else None
        self.notAccepted.setdefault(b, {})[src] = [
            c for c in m.val_a.without(m.proven)
            if keyring.command_ok(c) and not c.universal and not c.is_checkpoint
        ]
        if len(accepted) >= self.cluster.quorum and b not in self._fired:
            return self.phase_2a()
        return []

    def pick_value(self) -> CmdSequence:
        b = self.ballot
        entries = self.accepted.get(b, {})
        epoch = max((epoch_of(p) for p in entries.values()), default=0)
        chosen = {pid: p for pid, p in entries.items() if epoch_of(p) == epoch}
        # Only the certificates from the highest ballot matter: anything proven
        # earlier that they do not extend can never have been learned.
        ballots = self._cert_ballot.get(b, {})
        top = max((ballots[pid] for pid in chosen if ballots.get(pid) is not None), default=None)
        newest = {pid: p for pid, p in chosen.items() if ballots.get(pid) == top}
        max_tried = self.last_largest = largest_seq(newest, self.cluster.oracle)
        unproven = self.notAccepted.get(b, {})
        previous = remove_duplicates(c for pid in chosen for c in unproven.get(pid, ()))
        max_tried = concat(concat(max_tried, previous), self.proposals)
        if self.checkpoint_requested:
            max_tried = concat(max_tried, CmdSequence((self._checkpoint_command(epoch + 1),)))
        return max_tried

    def _checkpoint_command(self, generation: int) -> Command:
        c = Command(CommandId(self.pid, self._seqno), checkpoint_payload(generation))
        self._seqno += 1
        c = sign_command(self.cluster.provider, self.keys, c)
        self.note("checkpoint_proposed", command=c)
        return c

    def phase_2a(self) -> list:
        b = self.ballot
        self._fired.add(b)
        try:
            value = self.pick_value()
        except IncomparableProvenSequences as e:
            self.note("incomparable_proven", ballot=b, first=e.first, second=e.second)
            return []
        self.checkpoint_requested = False
        self.proposals = EMPTY
        self.note("phase_2a", ballot=b, value=value)
        return self.send_phase_2a(b, value)

    def send_phase_2a(self, b: Ballot, value: CmdSequence) -> list:
        return [Send(ACCEPTORS, P2aClassic(b, self.view, value))]

    def request_checkpoint(self) -> None:
        self.checkpoint_requested = True
