"""Proposer: turns client requests into signed commands and routes them.

In a fast ballot commands go straight to every acceptor; otherwise to the
current leader. Requests that arrive before the first BALLOT are held until
the proposer knows which way to route them.
"""

from __future__ import annotations

from .cluster import Cluster
from .core import BallotKind, CmdSequence, Command, CommandId
from .crypto import KeyPair, sign_command
from .wire import ACCEPTORS, P2aFast, Propose, Send


class Proposer:
    def __init__(self, pid: int, cluster: Cluster, keys: KeyPair):
        self.pid = pid
        self.cluster = cluster
        self.keys = keys
        self.ballot_type = None
        self.next_seqno = 1
        self.view = 0
        self.buffered = []
        # Issued but not yet acknowledged as learned; retransmitted on new ballots.
        self.pending = {}

    @property
    def leader(self) -> int:
        return self.cluster.leader_of(self.view)

    def make_command(self, payload=b"", read_keys=(), write_keys=(), universal=False) -> Command:
        cid = CommandId(self.pid, self.next_seqno)
        self.next_seqno += 1
        c = Command(cid, bytes(payload), frozenset(read_keys), frozenset(write_keys), universal)
        return sign_command(self.cluster.provider, self.keys, c)

    def _route(self, c: Command) -> list:
        value = CmdSequence((c,))
        if self.ballot_type == BallotKind.FAST:
            return [Send(ACCEPTORS, P2aFast(value))]
        return [Send(self.leader, Propose(value))]

    def on_ballot(self, kind) -> list:
        self.ballot_type = BallotKind(kind)
        self.buffered.clear()
        out = []
        for c in self.pending.values():
            out += self._route(c)
        return out

    def on_command_request(self, payload=b"", read_keys=(), write_keys=(), universal=False) -> list:
        c = self.make_command(payload, read_keys, write_keys, universal)
        return self.submit(c)

    def submit(self, c: Command) -> list:
        self.pending[c.id] = c
        if self.ballot_type is None:
            self.buffered.append(c)
            return []
        return self._route(c)

    def on_new_view(self, view: int) -> list:
        """Harness notification that a new leader took over; re-route in classic mode."""
        if view <= self.view:
            return []
        self.view = view
        if self.ballot_type != BallotKind.CLASSIC:
            return []
        return [Send(self.leader, Propose(CmdSequence((c,)))) for c in self.pending.values()]

    def acknowledge(self, ids) -> None:
        for cid in ids:
            self.pending.pop(cid, None)
