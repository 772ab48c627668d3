"""Acceptor: view change participation, phase 1b, the verification round and voting.

A few rules go beyond the literal pseudocode; each one closes a gap that
otherwise breaks either the fast path or safety under reordering:

* FAST raises bal_a, so the fast path is reachable at all.
* ``proven`` only ever moves forward: to an extension of itself, or to a
  value certified at a strictly higher ballot than the current one.
* An acceptor only turns a VERIFY quorum into a P2B for a ballot it has not
  already left (ballot >= bal_a). A P1B therefore always reports every value
  this acceptor helped learners learn.
* P2B also goes to acceptors. A valid relayed certificate moves ``proven``
  under the same rules as a locally gathered VERIFY quorum, but is not
  re-announced; it lets an acceptor left behind by a split vote catch up.
"""

from __future__ import annotations

from .cluster import Cluster
from .core import (
    EMPTY,
    ZERO_BALLOT,
    Ballot,
    CmdSequence,
    concat,
    eq_prefix,
    equivalent,
    is_universally_commutative,
)
from .crypto import (
    EMPTY_BASE,
    KeyPair,
    ProvenCert,
    check_proven_cert,
    make_suspicion,
    make_verify_proof,
    make_view_change,
    sequence_digest,
    suspicion_ok,
    verify_proof_ok,
    view_change_ok,
)
from .wire import (
    ACCEPTORS,
    LEARNERS,
    CheckpointAck,
    Fast,
    Leader,
    P1a,
    P1b,
    P2aClassic,
    P2aFast,
    P2b,
    P2bUniv,
    Send,
    Suspicion,
    Verify,
    ViewChange,
)


class Acceptor:
    def __init__(self, pid: int, cluster: Cluster, keys: KeyPair):
        self.pid = pid
        self.cluster = cluster
        self.keys = keys
        self.view = 0
        self.leader = cluster.leader_of(0)
        self.suspicions = {}
        self.new_view = {}
        self.bal_a = ZERO_BALLOT
        self.val_a = None  # None stands for the empty (bottom) vote
        self.proven = EMPTY
        self.proven_cert = ProvenCert(ZERO_BALLOT, EMPTY, {}, EMPTY_BASE)
        self.fast_bal = set()
        self.proofs = {}
        self.base = EMPTY_BASE
        self._p2b_sent = set()
        # Checkpoint bookkeeping: id -> learners that acked; the pending C*.
        self.ckpt_acks = {}
        self.paused = None
        self.held = []
        self.notes = []

    # -- helpers -------------------------------------------------------------

    def note(self, kind, **detail):
        self.notes.append((kind, detail))

    @property
    def oracle(self):
        return self.cluster.oracle

    def digest(self, value: CmdSequence) -> bytes:
        return sequence_digest(value, self.oracle, self.base)

    def stored_len(self) -> int:
        """Commands held in val_a and proven; what a checkpoint is meant to shrink."""
        return len(self.proven) + len(self.val_a or ())

    def anchor(self):
        if self.proven and self.proven[0].is_checkpoint:
            return self.proven[0]
        return None

    def _layout_ok(self, value: CmdSequence, from_leader: bool) -> bool:
        """Signatures, no universal/keyed mixing, checkpoints only at head or tail."""
        if not self.cluster.keyring.sequence_ok(value):
            return False
        if any(c.universal for c in value):
            return False
        last = len(value) - 1
        for i, c in enumerate(value):
            if not c.is_checkpoint:
                continue
            if i == 0 and c == self.anchor():
                continue
            if from_leader and i == last and i > 0 and c.id.proposer == self.leader:
                continue
            return False
        return True

    def handle(self, msg, src) -> list:
        if self.paused is not None and not isinstance(msg, CheckpointAck):
            self.held.append((msg, src))
            return []
        if isinstance(msg, P1a):
            return self.on_p1a(msg.ballot, msg.view, src)
        if isinstance(msg, Fast):
            self.on_fast(msg.ballot, msg.view, src)
            return []
        if isinstance(msg, Verify):
            return self.on_verify(msg.view, msg.ballot, msg.value, msg.proof, src)
        if isinstance(msg, P2b):
            return self.on_p2b(msg.ballot, msg.value, msg.proofs, src)
        if isinstance(msg, P2aClassic):
            return self.on_p2a_classic(msg.ballot, msg.view, msg.value, src)
        if isinstance(msg, P2aFast):
            return self.on_p2a_fast(msg.value, src)
        if isinstance(msg, Suspicion):
            return self.on_suspicion(msg.view, msg.proof, src)
        if isinstance(msg, ViewChange):
            return self.on_view_change(msg.new_view, msg.suspicions, msg.change_proof, src)
        if isinstance(msg, CheckpointAck):
            return self.on_checkpoint_ack(msg.checkpoint_id, src)
        return []

    # -- view change ---------------------------------------------------------

    def suspect_leader(self) -> list:
        if self.pid in self.suspicions:
            return []
        proof = make_suspicion(self.cluster.provider, self.keys, self.pid, self.view)
        self.suspicions[self.pid] = proof
        self.note("suspect", view=self.view)
        return [Send(ACCEPTORS, Suspicion(self.view, proof))]

    def _send_view_change(self, new_view: int, suspicions) -> list:
        mine = self.new_view.setdefault(new_view, {})
        if self.pid in mine:
            return []
        proof = make_view_change(self.cluster.provider, self.keys, self.pid, new_view)
        mine[self.pid] = proof
        return [Send(ACCEPTORS, ViewChange(new_view, dict(suspicions), proof))]

    def on_suspicion(self, view_i: int, proof, src) -> list:
        if view_i != self.view or src not in self.cluster.acceptors:
            return []
        if proof.acceptor == src and suspicion_ok(self.cluster.keyring, proof, self.view):
            self.suspicions[src] = proof
        if len(self.suspicions) > self.cluster.f:
            return self._send_view_change(self.view + 1, self.suspicions)
        return []

    def on_view_change(self, new_view_i: int, suspicions, change_proof, src) -> list:
        if new_view_i <= self.view or src not in self.cluster.acceptors:
            return []
        keyring = self.cluster.keyring
        valid = sum(
            1 for p, proof in suspicions.items()
            if p in self.cluster.acceptors and proof.acceptor == p
            and suspicion_ok(keyring, proof, new_view_i - 1)
        )
        if valid <= self.cluster.f:
            return []
        if change_proof.acceptor != src or not view_change_ok(keyring, change_proof, new_view_i):
            return []
        self.new_view.setdefault(new_view_i, {})[src] = change_proof
        out = self._send_view_change(new_view_i, suspicions)
        certs = self.new_view[new_view_i]
        if len(certs) >= self.cluster.quorum:
            self.view = new_view_i
            self.leader = self.cluster.leader_of(new_view_i)
            self.suspicions = {}
            for v in [v for v in self.new_view if v < new_view_i]:
                del self.new_view[v]
            self.note("view_adopted", view=new_view_i, leader=self.leader)
            out.append(Send(self.leader, Leader(new_view_i, dict(certs))))
        return out

    # -- agreement -----------------------------------------------------------

    def p1b_message(self, ballot: Ballot) -> P1b:
        return P1b(ballot, self.bal_a, self.proven, self.val_a or EMPTY, self.proven_cert)

    def on_p1a(self, ballot: Ballot, view_l: int, src=None) -> list:
        if src is not None and src != self.leader:
            return []
        if view_l != self.view or not self.bal_a < ballot:
            return []
        out = [Send(self.leader, self.p1b_message(ballot))]
        self.bal_a = ballot
        self.val_a = None
        return out

    def on_fast(self, ballot: Ballot, view_l: int, src=None) -> None:
        if src is not None and src != self.leader:
            return
        if view_l != self.view:
            return
        self.fast_bal.add(ballot)
        if ballot > self.bal_a:
            self.bal_a = ballot
        if ballot == self.bal_a and (self.val_a is None or not eq_prefix(self.proven, self.val_a, self.oracle)):
            self.val_a = self.proven

    def sign_vote(self, ballot: Ballot, value: CmdSequence):
        d = self.digest(value)
        proof = make_verify_proof(self.cluster.provider, self.keys, self.pid, ballot, d)
        self.proofs.setdefault((ballot, d), {})[self.pid] = proof
        return proof

    def broadcast_vote(self, ballot: Ballot, value: CmdSequence) -> list:
        proof = self.sign_vote(ballot, value)
        return [Send(ACCEPTORS, Verify(self.view, ballot, value, proof))]

    def on_verify(self, view_i: int, ballot_i: Ballot, val_i: CmdSequence, proof, src) -> list:
        if view_i != self.view or src not in self.cluster.acceptors or proof.acceptor != src:
            return []
        d = self.digest(val_i)
        if not verify_proof_ok(self.cluster.keyring, proof, ballot_i, d):
            return []
        if not self._layout_ok(val_i, from_leader=True) and not self._layout_ok(val_i, from_leader=False):
            return []
        bucket = self.proofs.setdefault((ballot_i, d), {})
        bucket[src] = proof
        if len(bucket) < self.cluster.quorum or ballot_i < self.bal_a:
            return []
        return self._adopt(ballot_i, val_i, d, bucket)

    def on_p2b(self, ballot: Ballot, value: CmdSequence, cert: ProvenCert, src) -> list:
        """A relayed certificate counts the same as collecting its VERIFYs here.

        Without this an acceptor stuck on an unlearned proven value never sees
        the higher-ballot quorum it was left out of and blocks the next ones.
        """
        if src not in self.cluster.acceptors or cert.ballot != ballot or cert.base != self.base:
            return []
        if ballot < self.bal_a or not equivalent(cert.value, value, self.oracle):
            return []
        if value and value[-1].is_checkpoint:
            # Pausing on a relayed cert would hold the VERIFYs this acceptor
            # needs for its own P2B; checkpoints complete through local quorums.
            return []
        if not self._layout_ok(value, from_leader=True) and not self._layout_ok(value, from_leader=False):
            return []
        cluster = self.cluster
        if not check_proven_cert(cert, cluster.keyring, cluster.acceptors, cluster.f, self.oracle):
            return []
        return self._adopt(ballot, value, self.digest(value), cert.proofs, relayed=True)

    def _adopt(self, ballot_i: Ballot, val_i: CmdSequence, d: bytes, proofs, relayed=False) -> list:
        if (ballot_i, d) in self._p2b_sent:
            return []
        if relayed and self.proven_cert.ballot == ballot_i and eq_prefix(val_i, self.proven, self.oracle):
            return []
        extends = eq_prefix(self.proven, val_i, self.oracle)
        if not extends and self.proven_cert.ballot >= ballot_i:
            self.note("stale_proof_ignored", ballot=ballot_i)
            return []
        if ballot_i > self.bal_a:
            # Quorum for a ballot we never heard about: treat it as the promise.
            self.bal_a = ballot_i
            self.val_a = None
        self.proven = val_i
        self.proven_cert = ProvenCert(ballot_i, val_i, dict(proofs), self.base)
        if relayed:
            # Catch up only. Learners count P2Bs from locally gathered quorums.
            out = []
        else:
            self._p2b_sent.add((ballot_i, d))
            msg = P2b(ballot_i, val_i, self.proven_cert)
            out = [Send(LEARNERS, msg), Send(ACCEPTORS, msg)]
        if val_i and val_i[-1].is_checkpoint and len(val_i) > 1:
            out += self._pause(val_i)
        return out

    def on_p2a_classic(self, ballot: Ballot, view_l: int, value: CmdSequence, src=None) -> list:
        if src is not None and src != self.leader:
            return []
        if view_l != self.view:
            return []
        return self.phase_2b_classic(ballot, value)

    def phase_2b_classic(self, ballot: Ballot, value: CmdSequence) -> list:
        if ballot < self.bal_a or self.bal_a in self.fast_bal:
            return []
        if value and is_universally_commutative(value):
            if not self.cluster.keyring.sequence_ok(value):
                return []
            return [Send(LEARNERS, P2bUniv(ballot, value))]
        if self.val_a is not None and ballot == self.bal_a:
            return []
        if not self._layout_ok(value, from_leader=True):
            self.note("rejected_value", ballot=ballot, reason="layout")
            return []
        if self.proven and not eq_prefix(self.proven, value, self.oracle):
            self.note("ByzantineLeaderSuspected", ballot=ballot, leader=self.leader)
            return []
        self.bal_a = ballot
        self.val_a = value
        return self.broadcast_vote(ballot, value)

    def on_p2a_fast(self, value: CmdSequence, src=None) -> list:
        if src is not None and src not in self.cluster.proposers:
            return []
        return self.phase_2b_fast(self.bal_a, value)

    def phase_2b_fast(self, ballot: Ballot, value: CmdSequence) -> list:
        if ballot != self.bal_a or ballot not in self.fast_bal or not value:
            return []
        keyring = self.cluster.keyring
        if is_universally_commutative(value):
            if not keyring.sequence_ok(value):
                return []
            return [Send(LEARNERS, P2bUniv(ballot, value))]
        if not self._layout_ok(value, from_leader=False) or any(c.is_checkpoint for c in value):
            self.note("rejected_value", ballot=ballot, reason="fast proposal")
            return []
        base = self.val_a if self.val_a is not None else self.proven
        grown = concat(base, value)
        if grown == base:
            return []
        self.val_a = grown
        return self.broadcast_vote(ballot, grown)

    # -- checkpointing -------------------------------------------------------

    def _pause(self, value: CmdSequence) -> list:
        cstar = value[-1]
        self.paused = (cstar, value)
        self.note("checkpoint_paused", checkpoint=cstar.id)
        return self._maybe_finish_checkpoint()

    def on_checkpoint_ack(self, cid, src) -> list:
        if src not in self.cluster.learners:
            return []
        self.ckpt_acks.setdefault(cid, set()).add(src)
        return self._maybe_finish_checkpoint()

    def _maybe_finish_checkpoint(self) -> list:
        if self.paused is None:
            return []
        cstar, value = self.paused
        if len(self.ckpt_acks.get(cstar.id, ())) < self.cluster.quorum:
            return []
        prefix = CmdSequence(value.items[:-1])
        self.base = sequence_digest(prefix, self.oracle, self.base)
        anchor = CmdSequence((cstar,))
        self.proven = anchor
        self.val_a = anchor
        self.proven_cert = ProvenCert(self.proven_cert.ballot, anchor, self.proven_cert.proofs, self.base)
        self.proofs = {}
        self._p2b_sent = set()
        self.ckpt_acks = {k: v for k, v in self.ckpt_acks.items() if k != cstar.id}
        self.paused = None
        self.note("checkpoint_done", checkpoint=cstar.id, stored=self.stored_len())
        out = []
        held, self.held = self.held, []
        for msg, src in held:
            out += self.handle(msg, src)
        return out
