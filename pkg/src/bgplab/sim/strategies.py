"""Byzantine behaviours, written as mixins over the correct roles.

A strategy only ever signs with its own process's keys: the simulator hands
each role exactly one KeyPair. Several strategies can be stacked on a single
process (for example a lying leader that also double-votes as an acceptor).
"""

from __future__ import annotations

import random

from ..acceptor import Acceptor
from ..core import EMPTY, CmdSequence, Command, CommandId, concat, eq_prefix
from ..crypto import ProvenCert, make_verify_proof, make_view_change
from ..leader import Leader
from ..proposer import Proposer
from ..wire import ACCEPTORS, P1b, P2aClassic, Send, Verify, ViewChange

FORGED_SEQNO = 1_000_000


def forged_command(strategy_owner, victim: int, k: int) -> Command:
    """A command claiming to come from ``victim`` but signed with the wrong key."""
    c = Command(CommandId(victim, FORGED_SEQNO + k), b"forged", frozenset(), frozenset({"k0"}))
    sig = strategy_owner.cluster.provider.sign(strategy_owner.keys, b"not-the-command-statement")
    return Command(c.id, c.payload, c.read_keys, c.write_keys, c.universal, sig)


def variant_of(value: CmdSequence, oracle) -> CmdSequence:
    """Something that conflicts with ``value`` if anything can."""
    flipped = CmdSequence(reversed(value.items))
    if not eq_prefix(value, flipped, oracle):
        return flipped
    return CmdSequence(value.items[:-1])


class _Rng:
    def _rng(self) -> random.Random:
        r = getattr(self, "_byz_rng", None)
        if r is None:
            r = self._byz_rng = random.Random(f"byz|{self.pid}|{getattr(self, 'byz_seed', 0)}")
        return r


# --- acceptor side -----------------------------------------------------------

class OmitP1bCommands(_Rng):
    """Reports val_a cut down to its proven part, and sometimes hides proven too."""

    def p1b_message(self, ballot):
        if self._rng().random() < 0.5:
            return P1b(ballot, self.bal_a, EMPTY, EMPTY, ProvenCert(self.proven_cert.ballot, EMPTY, {}, self.base))
        return P1b(ballot, self.bal_a, self.proven, self.proven, self.proven_cert)


class DoubleVoteAcceptor:
    """Signs the real value for half the acceptors and a conflicting one for the rest."""

    def broadcast_vote(self, ballot, value):
        proof = self.sign_vote(ballot, value)
        other = variant_of(value, self.oracle)
        alt = make_verify_proof(self.cluster.provider, self.keys, self.pid, ballot, self.digest(other))
        self.proofs.setdefault((ballot, self.digest(other)), {})[self.pid] = alt
        out = []
        for i, a in enumerate(self.cluster.acceptors):
            if i % 2 == 0:
                out.append(Send(a, Verify(self.view, ballot, value, proof)))
            else:
                out.append(Send(a, Verify(self.view, ballot, other, alt)))
        return out

    def phase_2b_classic(self, ballot, value):
        # Votes even when the prefix guard would say no.
        saved = self.proven
        self.proven = EMPTY
        try:
            return super().phase_2b_classic(ballot, value)
        finally:
            self.proven = saved


class FalseSuspector:
    """Suspects the leader at every opportunity and pushes its lone suspicion around."""

    byzantine_tick = True

    def on_tick(self):
        self.suspicions.pop(self.pid, None)
        out = self.suspect_leader()
        proof = make_view_change(self.cluster.provider, self.keys, self.pid, self.view + 1)
        out.append(Send(ACCEPTORS, ViewChange(self.view + 1, dict(self.suspicions), proof)))
        return out


class ForgeAcceptor:
    def phase_2b_fast(self, ballot, value):
        bad = forged_command(self, self.cluster.proposers[0], len(self.proofs))
        return super().phase_2b_fast(ballot, concat(value, CmdSequence((bad,))))

    def p1b_message(self, ballot):
        m = super().p1b_message(ballot)
        bad = forged_command(self, self.cluster.proposers[0], 7)
        return P1b(m.ballot, m.bal_a, m.proven, concat(m.val_a, CmdSequence((bad,))), m.proofs)

    def _layout_ok(self, value, from_leader):
        return True


# --- leader side -------------------------------------------------------------

class EquivocateLeader:
    """Sends the honest value to some acceptors and a conflicting one to the rest."""

    def send_phase_2a(self, b, value):
        other = variant_of(value, self.cluster.oracle)
        out = []
        for i, a in enumerate(self.cluster.acceptors):
            v = value if i % 2 == 0 else other
            out.append(Send(a, P2aClassic(b, self.view, v)))
        return out


class NonExtensionLeader:
    """Once something is proven, proposes a value that does not extend it."""

    def pick_value(self):
        honest = super().pick_value()
        largest = self.last_largest
        if not largest:
            return honest
        rest = honest.without(largest)
        flipped = concat(CmdSequence(reversed(largest.items)), rest)
        if not eq_prefix(largest, flipped, self.cluster.oracle):
            value = flipped
        else:
            value = rest
        self.note("non_extension_proposed", largest=largest, value=value)
        return value


class ForgeLeader:
    def send_phase_2a(self, b, value):
        bad = forged_command(self, self.cluster.proposers[0], b.number)
        return super().send_phase_2a(b, concat(value, CmdSequence((bad,))))


# --- proposer side -----------------------------------------------------------

class ForgeProposer:
    def make_command(self, payload=b"", read_keys=(), write_keys=(), universal=False):
        c = super().make_command(payload, read_keys, write_keys, universal)
        sig = bytes(len(c.sig)) if c.sig else b"\x00"
        return Command(c.id, c.payload, c.read_keys, c.write_keys, c.universal, sig)


ACCEPTOR_MIXINS = {
    "omit-p1b-commands": OmitP1bCommands,
    "double-vote-acceptor": DoubleVoteAcceptor,
    "false-suspector": FalseSuspector,
    "forge-command": ForgeAcceptor,
}
LEADER_MIXINS = {
    "equivocate-leader": EquivocateLeader,
    "non-extension-leader": NonExtensionLeader,
    "forge-command": ForgeLeader,
}
PROPOSER_MIXINS = {"forge-command": ForgeProposer}

_cache = {}


def _compose(base, table, strategies):
    mixins = tuple(table[s] for s in strategies if s in table)
    if not mixins:
        return base
    key = (base, mixins)
    cls = _cache.get(key)
    if cls is None:
        name = "Byzantine" + base.__name__
        cls = _cache[key] = type(name, mixins + (base,), {})
    return cls


def acceptor_class(strategies):
    return _compose(Acceptor, ACCEPTOR_MIXINS, strategies)


def leader_class(strategies):
    return _compose(Leader, LEADER_MIXINS, strategies)


def proposer_class(strategies):
    return _compose(Proposer, PROPOSER_MIXINS, strategies)
