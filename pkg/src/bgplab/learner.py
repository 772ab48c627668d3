"""Learner: certificate checks, P2B quorums, merging and checkpoint execution."""

from __future__ import annotations

from .cluster import Cluster
from .core import (
    EMPTY,
    CmdSequence,
    checkpoint_generation,
    concat,
    eq_prefix,
    equivalent,
    is_universally_commutative,
    merge_sequences,
)
from .crypto import KeyPair, check_proven_cert, sequence_digest
from .wire import ACCEPTORS, CheckpointAck, P2b, P2bUniv, Send


class Learner:
    def __init__(self, pid: int, cluster: Cluster, keys: KeyPair | None = None):
        self.pid = pid
        self.cluster = cluster
        self.keys = keys
        self.learned = EMPTY
        self.messages = {}
        self._done = set()
        # Execution history across checkpoints, and the ids in it. Re-proposals
        # that resurface after a checkpoint are learned but not executed twice.
        self.log = []
        self.executed = set()
        self.post_checkpoint = []
        self.executed_checkpoints = []
        self.last_quorum = 0
        self.notes = []

    def note(self, kind, **detail):
        self.notes.append((kind, detail))

    @property
    def generation(self) -> int:
        if self.learned and self.learned[0].is_checkpoint:
            return checkpoint_generation(self.learned[0])
        return 0

    def handle(self, msg, src) -> list:
        if isinstance(msg, P2b):
            return self.on_p2b(msg.ballot, msg.value, msg.proofs, src)
        if isinstance(msg, P2bUniv):
            return self.on_p2b_univ(msg.ballot, msg.value, src)
        return []

    def on_p2b(self, ballot, value: CmdSequence, proofs, src) -> list:
        cluster = self.cluster
        if src not in cluster.acceptors:
            return []
        if (
            proofs.ballot != ballot
            or not equivalent(proofs.value, value, cluster.oracle)
            or not check_proven_cert(proofs, cluster.keyring, cluster.acceptors, cluster.f, cluster.oracle)
            or not cluster.keyring.sequence_ok(value)
        ):
            self.note("invalid_cert", src=src, ballot=ballot)
            return []
        key = (ballot, sequence_digest(value, cluster.oracle, proofs.base))
        senders = self.messages.setdefault(key, {})
        senders[src] = proofs
        if len(senders) >= cluster.quorum and key not in self._done:
            self._done.add(key)
            self.last_quorum = len(senders)
            return self.learn(value)
        return []

    def on_p2b_univ(self, ballot, value: CmdSequence, src) -> list:
        cluster = self.cluster
        if src not in cluster.acceptors or not value:
            return []
        if not is_universally_commutative(value) or not cluster.keyring.sequence_ok(value):
            return []
        key = ("univ", ballot, sequence_digest(value, cluster.oracle))
        senders = self.messages.setdefault(key, {})
        senders[src] = True
        if len(senders) > cluster.f and key not in self._done:
            self._done.add(key)
            self.last_quorum = len(senders)
            self._extend(concat(self.learned, value))
        return []

    def _extend(self, new: CmdSequence) -> None:
        for c in new:
            if c.id not in self.executed:
                self.executed.add(c.id)
                self.log.append(c)
        self.learned = new

    def learn(self, value: CmdSequence) -> list:
        """Apply a certified sequence, honouring checkpoint boundaries."""
        head = value[0] if value else None
        anchor = self.learned[0] if self.learned and self.learned[0].is_checkpoint else None
        if head is not None and head.is_checkpoint and head != anchor:
            if checkpoint_generation(head) > self.generation:
                # Post-checkpoint sequence overtook the checkpoint itself.
                self.post_checkpoint.append(value)
                self.note("buffered_post_checkpoint", checkpoint=head.id)
            else:
                self.note("discarded_stale", checkpoint=head.id)
            return []
        if anchor is not None and (head is None or not head.is_checkpoint):
            self.note("discarded_pre_checkpoint", size=len(value))
            return []
        merged = merge_sequences(self.learned, value)
        if not eq_prefix(value, merged, self.cluster.oracle):
            self.note("divergence", learned=self.learned, value=value)
        self._extend(merged)
        tail = value[-1] if value else None
        if tail is not None and tail.is_checkpoint and tail != anchor:
            return self._execute_checkpoint(tail)
        return []

    def _execute_checkpoint(self, cstar) -> list:
        self.learned = CmdSequence((cstar,))
        self.executed_checkpoints.append(cstar.id)
        self.note("checkpoint_executed", checkpoint=cstar.id)
        out = [Send(ACCEPTORS, CheckpointAck(cstar.id))]
        waiting, self.post_checkpoint = self.post_checkpoint, []
        for v in waiting:
            out += self.learn(v)
        return out
