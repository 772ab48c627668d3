from bgplab.core import Ballot, BallotKind, Command, CommandId, checkpoint_payload, seq
from bgplab.crypto import ProvenCert, make_verify_proof, sequence_digest, sign_command
from bgplab.learner import Learner
from bgplab.wire import ACCEPTORS, CheckpointAck

B1 = Ballot(0, 1, BallotKind.CLASSIC)


def learner(net):
    return Learner(net.cluster.learners[0], net.cluster)


def cert(net, value, ballot=B1, signers=(0, 1, 2)):
    d = sequence_digest(value)
    return ProvenCert(ballot, value, {
        i: make_verify_proof(net.provider, net.keys[i], i, ballot, d) for i in signers
    })


def deliver(net, ln, value, senders=(0, 1, 2), ballot=B1):
    c = cert(net, value, ballot)
    out = []
    for s in senders:
        out += ln.on_p2b(ballot, value, c, s)
    return out


def checkpoint(net, gen=1, seqno=1):
    c = Command(CommandId(0, seqno), checkpoint_payload(gen))
    return sign_command(net.provider, net.keys[0], c)


def test_quorum_of_p2b_learns(net):
    ln = learner(net)
    v = seq(net.cmd(w="x"))
    deliver(net, ln, v, (0, 1))
    assert not ln.learned
    deliver(net, ln, v, (2,))
    assert ln.learned == v and ln.last_quorum == 3


def test_single_p2b_not_enough(net):
    ln = learner(net)
    deliver(net, ln, seq(net.cmd(w="x")), (0,))
    assert not ln.learned


def test_permuted_equivalent_p2bs_collated(net):
    ln = learner(net)
    x, y = net.cmd(w="x"), net.cmd(w="y")
    deliver(net, ln, seq(x, y), (0, 1))
    deliver(net, ln, seq(y, x), (2,))
    assert len(ln.learned) == 2
    deliver(net, ln, seq(y, x), (3,))
    assert len(ln.log) == 2


def test_bad_cert_rejected(net):
    ln = learner(net)
    v = seq(net.cmd(w="x"))
    weak = cert(net, v, signers=(0, 1))
    for s in (0, 1, 2):
        ln.on_p2b(B1, v, weak, s)
    assert not ln.learned
    assert any(k == "invalid_cert" for k, _ in ln.notes)


def test_p2b_from_non_acceptor_ignored(net):
    ln = learner(net)
    v = seq(net.cmd(w="x"))
    deliver(net, ln, v, (0, 1, net.proposer))
    assert not ln.learned


def test_universal_f_plus_one(net):
    ln = learner(net)
    v = seq(net.cmd(u=True))
    ln.on_p2b_univ(B1, v, 0)
    assert not ln.learned
    ln.on_p2b_univ(B1, v, 0)
    assert not ln.learned
    ln.on_p2b_univ(B1, v, 1)
    assert ln.learned == v and ln.last_quorum == 2


def test_universal_path_rejects_keyed(net):
    ln = learner(net)
    v = seq(net.cmd(w="x"))
    for s in range(4):
        ln.on_p2b_univ(B1, v, s)
    assert not ln.learned


def test_learned_only_grows(net):
    ln = learner(net)
    a, b = net.cmd(w="x"), net.cmd(w="x")
    deliver(net, ln, seq(a))
    deliver(net, ln, seq(a, b), ballot=Ballot(0, 2))
    assert ln.learned == seq(a, b)
    deliver(net, ln, seq(a), ballot=Ballot(0, 3))
    assert ln.learned == seq(a, b)


def test_checkpoint_executes_and_acks(net):
    ln = learner(net)
    a, b = net.cmd(w="x"), net.cmd(w="y")
    ck = checkpoint(net)
    out = deliver(net, ln, seq(a, b, ck))
    assert ln.learned == seq(ck)
    assert [(s.to, type(s.msg)) for s in out] == [(ACCEPTORS, CheckpointAck)]
    assert [c.id for c in ln.log] == [a.id, b.id, ck.id]


def test_post_checkpoint_sequence_buffered(net):
    ln = learner(net)
    a, d = net.cmd(w="x"), net.cmd(w="z")
    ck = checkpoint(net)
    deliver(net, ln, seq(ck, d), ballot=Ballot(0, 2))
    assert not ln.learned
    assert any(k == "buffered_post_checkpoint" for k, _ in ln.notes)
    deliver(net, ln, seq(a, ck))
    assert ln.learned == seq(ck, d)


def test_pre_checkpoint_sequence_discarded(net):
    ln = learner(net)
    a, b = net.cmd(w="x"), net.cmd(w="y")
    ck = checkpoint(net)
    deliver(net, ln, seq(a, ck), ballot=Ballot(0, 2))
    deliver(net, ln, seq(a, b), ballot=Ballot(0, 3))
    assert ln.learned == seq(ck)
    assert any(k == "discarded_pre_checkpoint" for k, _ in ln.notes)


def test_resurfacing_command_executed_once(net):
    ln = learner(net)
    a = net.cmd(w="x")
    ck = checkpoint(net)
    deliver(net, ln, seq(a, ck))
    deliver(net, ln, seq(ck, a), ballot=Ballot(0, 2))
    assert [c.id for c in ln.log].count(a.id) == 1
