from bgplab.acceptor import Acceptor
from bgplab.core import Ballot, BallotKind, Command, CommandId, checkpoint_payload, seq
from bgplab.crypto import (
    SuspicionProof,
    make_suspicion,
    make_verify_proof,
    make_view_change,
    sequence_digest,
    sign_command,
)
from bgplab.wire import (
    ACCEPTORS,
    LEARNERS,
    Leader,
    P2b,
    P2bUniv,
    Suspicion,
    Verify,
    ViewChange,
)

B1 = Ballot(0, 1, BallotKind.CLASSIC)
F1 = Ballot(0, 1, BallotKind.FAST)


def acc(net, pid=0):
    return Acceptor(pid, net.cluster, net.keys[pid])


def vote(net, signer, ballot, value, base=None):
    d = sequence_digest(value, net.cluster.oracle, base) if base else sequence_digest(value)
    return make_verify_proof(net.provider, net.keys[signer], signer, ballot, d)


def feed_votes(net, a, ballot, value, signers=(1, 2)):
    out = []
    for s in signers:
        out += a.on_verify(a.view, ballot, value, vote(net, s, ballot, value), s)
    return out


def prove(net, a, ballot, value):
    """Drive ``a`` through a classic ballot until ``value`` is proven there."""
    a.on_p1a(ballot, a.view, a.leader)
    a.on_p2a_classic(ballot, a.view, value, a.leader)
    feed_votes(net, a, ballot, value)
    assert a.proven == value


# --- view change -----------------------------------------------------------

def test_suspect_leader_once_per_view(net):
    a = acc(net)
    out = a.suspect_leader()
    assert len(out) == 1 and isinstance(out[0].msg, Suspicion) and out[0].to == ACCEPTORS
    assert a.suspect_leader() == []


def _suspect(net, pid, view):
    return make_suspicion(net.provider, net.keys[pid], pid, view)


def test_second_suspicion_triggers_view_change(net):
    a = acc(net, 0)
    assert a.on_suspicion(0, _suspect(net, 1, 0), 1) == []
    out = a.on_suspicion(0, _suspect(net, 2, 0), 2)
    assert len(out) == 1 and isinstance(out[0].msg, ViewChange) and out[0].msg.new_view == 1


def test_suspicion_wrong_view_or_forged(net):
    a = acc(net, 0)
    a.on_suspicion(1, _suspect(net, 1, 1), 1)
    a.on_suspicion(0, SuspicionProof(2, 0, b"forged"), 2)
    assert a.suspicions == {}


def _view_change(net, src, view, suspecters=(1, 2)):
    s = {p: _suspect(net, p, view - 1) for p in suspecters}
    return s, make_view_change(net.provider, net.keys[src], src, view)


def test_view_adopted_on_quorum_and_leader_told(net):
    a = acc(net, 0)
    out = []
    for src in (1, 2, 3):
        s, p = _view_change(net, src, 1)
        out += a.on_view_change(1, s, p, src)
    assert a.view == 1 and a.leader == 1
    assert any(isinstance(x.msg, Leader) and x.to == 1 for x in out)
    # after the view change a fresh suspicion goes out for view 1
    again = a.suspect_leader()
    assert again and again[0].msg.view == 1


def test_view_change_with_f_suspicions_ignored(net):
    a = acc(net, 0)
    s, p = _view_change(net, 1, 1, suspecters=(1,))
    assert a.on_view_change(1, s, p, 1) == []
    assert a.new_view == {}


def test_leader_of_view():
    from conftest import Net
    assert Net().cluster.leader_of(5) == 1


# --- phase 1 and fast ------------------------------------------------------

def test_p1a_examples(net):
    a = acc(net)
    out = a.on_p1a(Ballot(0, 2), 0, 0)
    assert len(out) == 1 and out[0].to == 0 and a.bal_a == Ballot(0, 2)
    assert a.on_p1a(Ballot(0, 1), 0, 0) == []
    assert a.on_p1a(Ballot(1, 5), 1, 0) == []


def test_p1a_from_non_leader_ignored(net):
    assert acc(net).on_p1a(Ballot(0, 2), 0, 3) == []


def test_fast_examples(net):
    a = acc(net)
    a.on_fast(F1, 0, 0)
    assert F1 in a.fast_bal
    a.on_fast(F1, 0, 0)
    assert a.fast_bal == {F1}
    b = acc(net)
    b.on_fast(F1, 3, 0)
    assert b.fast_bal == set()


# --- verification and votes ------------------------------------------------

def test_third_verify_proves_and_sends_p2b(net):
    a = acc(net)
    v = seq(net.cmd(w="x"))
    a.on_p1a(B1, 0, 0)
    out = a.on_p2a_classic(B1, 0, v, 0)
    assert isinstance(out[0].msg, Verify)
    assert feed_votes(net, a, B1, v, (1,)) == []
    out = feed_votes(net, a, B1, v, (2,))
    assert a.proven == v
    assert {s.to for s in out} == {LEARNERS, ACCEPTORS}
    assert all(isinstance(s.msg, P2b) for s in out)


def test_verify_bad_signature_not_counted(net):
    a = acc(net)
    v = seq(net.cmd(w="x"))
    bad = make_verify_proof(net.provider, net.keys[2], 1, B1, sequence_digest(v))
    a.on_verify(0, B1, v, bad, 1)
    assert all(1 not in bucket for bucket in a.proofs.values())


def test_verify_for_permuted_equivalent_counted(net):
    a = acc(net)
    x, y = net.cmd(w="x"), net.cmd(w="y")
    a.on_p1a(B1, 0, 0)
    a.on_p2a_classic(B1, 0, seq(x, y), 0)
    a.on_verify(0, B1, seq(y, x), vote(net, 1, B1, seq(y, x)), 1)
    a.on_verify(0, B1, seq(y, x), vote(net, 2, B1, seq(y, x)), 2)
    assert len(a.proven) == 2


def test_p2a_classic_prefix_guard(net):
    x, y = net.cmd(w="k"), net.cmd(w="k")
    a = acc(net)
    prove(net, a, B1, seq(x))
    out = a.on_p2a_classic(Ballot(0, 2), 0, seq(x, y), 0)
    assert out and isinstance(out[0].msg, Verify)

    b = acc(net)
    prove(net, b, B1, seq(x))
    assert b.on_p2a_classic(Ballot(0, 2), 0, seq(y, x), 0) == []
    assert any(k == "ByzantineLeaderSuspected" for k, _ in b.notes)


def test_p2a_universal_skips_verification(net):
    a = acc(net)
    out = a.on_p2a_classic(B1, 0, seq(net.cmd(u=True)), 0)
    assert len(out) == 1 and isinstance(out[0].msg, P2bUniv) and out[0].to == LEARNERS


def test_p2a_fast_appends(net):
    a = acc(net)
    a.on_fast(F1, 0, 0)
    c, d = net.cmd(w="c"), net.cmd(w="d")
    out = a.on_p2a_fast(seq(c), net.proposer)
    assert out[0].msg.value == seq(c)
    out = a.on_p2a_fast(seq(d), net.proposer)
    assert out[0].msg.value == seq(c, d)


def test_p2a_fast_bad_signature_dropped(net):
    a = acc(net)
    a.on_fast(F1, 0, 0)
    c = net.cmd(w="c")
    forged = Command(c.id, b"other", c.read_keys, c.write_keys, False, c.sig)
    assert a.on_p2a_fast(seq(forged), net.proposer) == []


def test_p2a_fast_outside_fast_ballot_ignored(net):
    a = acc(net)
    a.on_p1a(B1, 0, 0)
    assert a.on_p2a_fast(seq(net.cmd(w="c")), net.proposer) == []


def test_relayed_p2b_catches_up_silently(net):
    src = acc(net, 1)
    v = seq(net.cmd(w="x"))
    src.on_p1a(B1, 0, 0)
    src.on_p2a_classic(B1, 0, v, 0)
    relay = feed_votes(net, src, B1, v, (0, 2))[0].msg
    a = acc(net, 3)
    assert a.on_p2b(relay.ballot, relay.value, relay.proofs, 1) == []
    assert a.proven == v
    # a forged relay is ignored
    b = acc(net, 3)
    assert b.on_p2b(B1, v, relay.proofs, 7) == []
    assert not b.proven


# --- checkpoints -----------------------------------------------------------

def _checkpoint_value(net):
    a = net.cmd(w="x")
    ck = sign_command(net.provider, net.keys[0],
                      Command(CommandId(0, 1), checkpoint_payload(1)))
    return seq(a, ck), ck


def test_checkpoint_truncates_after_quorum_of_acks(net):
    a = acc(net)
    value, ck = _checkpoint_value(net)
    prove(net, a, B1, value)
    assert a.paused is not None and a.stored_len() == 4
    learners = net.cluster.learners
    a.on_checkpoint_ack(ck.id, learners[0])
    a.on_checkpoint_ack(ck.id, learners[0])
    a.on_checkpoint_ack(ck.id, learners[1])
    assert a.paused is not None
    a.on_checkpoint_ack(ck.id, learners[2])
    assert a.paused is None
    assert a.proven == seq(ck) and a.stored_len() == 2


def test_unknown_checkpoint_ack_ignored(net):
    a = acc(net)
    value, ck = _checkpoint_value(net)
    prove(net, a, B1, value)
    for lid in net.cluster.learners:
        a.on_checkpoint_ack(CommandId(0, 99), lid)
    assert a.paused is not None


def test_messages_held_while_paused(net):
    a = acc(net)
    value, ck = _checkpoint_value(net)
    prove(net, a, B1, value)
    from bgplab.wire import P1a
    assert a.handle(P1a(Ballot(0, 2), 0), 0) == []
    assert a.held
    out = []
    for lid in net.cluster.learners[:3]:
        out += a.on_checkpoint_ack(ck.id, lid)
    assert not a.held and out  # the held P1A was answered
