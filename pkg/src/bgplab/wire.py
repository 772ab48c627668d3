"""Protocol message vocabulary and its bit-exact codec.

Each message is a one-byte variant tag followed by its fields in declaration
order. Layouts are listed in docs/wire.md; golden encodings live in
tests/golden/. Embedded proofs are carried opaquely and only checked by the
receiving role, never at decode time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .core import EMPTY, ZERO_BALLOT, Ballot, BallotKind, CmdSequence, CommandId
from .crypto import (
    EMPTY_BASE,
    ProvenCert,
    SuspicionProof,
    VerifyProof,
    ViewChangeProof,
)
from .encoding import (
    KIND_CODES,
    KIND_FROM_CODE,
    DecodeError,
    Reader,
    Writer,
    read_ballot,
    read_sequence,
    write_ballot,
    write_sequence,
)

# Destination groups understood by the simulator.
ACCEPTORS = "acceptors"
LEARNERS = "learners"
PROPOSERS = "proposers"


class MalformedMessage(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Propose:
    prop: CmdSequence


@dataclass(frozen=True)
class BallotMsg:
    kind: BallotKind


@dataclass(frozen=True)
class Fast:
    ballot: Ballot
    view: int


@dataclass(frozen=True)
class P1a:
    ballot: Ballot
    view: int


@dataclass(frozen=True)
class P1b:
    ballot: Ballot
    bal_a: Ballot
    proven: CmdSequence
    val_a: CmdSequence
    proofs: ProvenCert


@dataclass(frozen=True)
class P2aClassic:
    ballot: Ballot
    view: int
    value: CmdSequence


@dataclass(frozen=True)
class P2aFast:
    value: CmdSequence


@dataclass(frozen=True)
class Verify:
    view: int
    ballot: Ballot
    value: CmdSequence
    proof: VerifyProof


@dataclass(frozen=True)
class P2b:
    ballot: Ballot
    value: CmdSequence
    proofs: ProvenCert


@dataclass(frozen=True)
class P2bUniv:
    ballot: Ballot
    value: CmdSequence


@dataclass(frozen=True)
class Suspicion:
    view: int
    proof: SuspicionProof


@dataclass(frozen=True)
class ViewChange:
    new_view: int
    suspicions: Mapping[int, SuspicionProof]
    change_proof: ViewChangeProof


@dataclass(frozen=True)
class Leader:
    view: int
    proofs: Mapping[int, ViewChangeProof]


@dataclass(frozen=True)
class CheckpointAck:
    checkpoint_id: CommandId


Message = Union[
    Propose, BallotMsg, Fast, P1a, P1b, P2aClassic, P2aFast, Verify,
    P2b, P2bUniv, Suspicion, ViewChange, Leader, CheckpointAck,
]


@dataclass(frozen=True)
class Send:
    """An outbound message: ``to`` is a process id or a destination group."""

    to: object
    msg: object


TAGS = {
    Propose: 0x01, BallotMsg: 0x02, Fast: 0x03, P1a: 0x04, P1b: 0x05,
    P2aClassic: 0x06, P2aFast: 0x07, Verify: 0x08, P2b: 0x09, P2bUniv: 0x0A,
    Suspicion: 0x0B, ViewChange: 0x0C, Leader: 0x0D, CheckpointAck: 0x0E,
}
NAMES = {
    Propose: "PROPOSE", BallotMsg: "BALLOT", Fast: "FAST", P1a: "P1A", P1b: "P1B",
    P2aClassic: "P2A_CLASSIC", P2aFast: "P2A_FAST", Verify: "VERIFY", P2b: "P2B",
    P2bUniv: "P2B_UNIV", Suspicion: "SUSPICION", ViewChange: "VIEW_CHANGE",
    Leader: "LEADER", CheckpointAck: "CHECKPOINT_ACK",
}
BY_TAG = {v: k for k, v in TAGS.items()}


def tag_name(m) -> str:
    return NAMES[type(m)]


# --- field helpers ---------------------------------------------------------

def _w_verify_proof(w: Writer, p: VerifyProof):
    w.u32(p.acceptor)
    write_ballot(w, p.ballot)
    w.blob(p.value_digest).blob(p.sig)


def _r_verify_proof(r: Reader) -> VerifyProof:
    return VerifyProof(r.u32(), read_ballot(r), r.blob(), r.blob())


def _w_suspicion(w: Writer, p: SuspicionProof):
    w.u32(p.acceptor).u64(p.view).blob(p.sig)


def _r_suspicion(r: Reader) -> SuspicionProof:
    return SuspicionProof(r.u32(), r.u64(), r.blob())


def _w_view_change(w: Writer, p: ViewChangeProof):
    w.u32(p.acceptor).u64(p.new_view).blob(p.sig)


def _r_view_change(r: Reader) -> ViewChangeProof:
    return ViewChangeProof(r.u32(), r.u64(), r.blob())


def _w_map(w: Writer, m: Mapping, write_value):
    keys = sorted(m)
    w.u32(len(keys))
    for k in keys:
        w.u32(k)
        write_value(w, m[k])


def _r_map(r: Reader, read_value) -> dict:
    out = {}
    last = -1
    for _ in range(r.count()):
        k = r.u32()
        if k <= last:
            raise DecodeError("map keys not strictly ascending")
        last = k
        out[k] = read_value(r)
    return out


def _w_cert(w: Writer, c: ProvenCert):
    write_ballot(w, c.ballot)
    write_sequence(w, c.value)
    w.blob(c.base)
    _w_map(w, c.proofs, _w_verify_proof)


def _r_cert(r: Reader) -> ProvenCert:
    ballot = read_ballot(r)
    value = read_sequence(r)
    base = r.blob()
    proofs = _r_map(r, _r_verify_proof)
    return ProvenCert(ballot, value, proofs, base)


# --- codec -----------------------------------------------------------------

def encode(m) -> bytes:
    tag = TAGS.get(type(m))
    if tag is None:
        raise TypeError(f"not a protocol message: {m!r}")
    w = Writer().u8(tag)
    if isinstance(m, Propose):
        write_sequence(w, m.prop)
    elif isinstance(m, BallotMsg):
        w.u8(KIND_CODES[BallotKind(m.kind)])
    elif isinstance(m, (Fast, P1a)):
        write_ballot(w, m.ballot)
        w.u64(m.view)
    elif isinstance(m, P1b):
        write_ballot(w, m.ballot)
        write_ballot(w, m.bal_a)
        write_sequence(w, m.proven)
        write_sequence(w, m.val_a)
        _w_cert(w, m.proofs)
    elif isinstance(m, P2aClassic):
        write_ballot(w, m.ballot)
        w.u64(m.view)
        write_sequence(w, m.value)
    elif isinstance(m, P2aFast):
        write_sequence(w, m.value)
    elif isinstance(m, Verify):
        w.u64(m.view)
        write_ballot(w, m.ballot)
        write_sequence(w, m.value)
        _w_verify_proof(w, m.proof)
    elif isinstance(m, P2b):
        write_ballot(w, m.ballot)
        write_sequence(w, m.value)
        _w_cert(w, m.proofs)
    elif isinstance(m, P2bUniv):
        write_ballot(w, m.ballot)
        write_sequence(w, m.value)
    elif isinstance(m, Suspicion):
        w.u64(m.view)
        _w_suspicion(w, m.proof)
    elif isinstance(m, ViewChange):
        w.u64(m.new_view)
        _w_map(w, m.suspicions, _w_suspicion)
        _w_view_change(w, m.change_proof)
    elif isinstance(m, Leader):
        w.u64(m.view)
        _w_map(w, m.proofs, _w_view_change)
    elif isinstance(m, CheckpointAck):
        w.u32(m.checkpoint_id.proposer).u64(m.checkpoint_id.seqno)
    return w.getvalue()


def _decode(r: Reader):
    tag = r.u8()
    cls = BY_TAG.get(tag)
    if cls is None:
        raise DecodeError(f"unknown message tag 0x{tag:02x}")
    if cls is Propose:
        return Propose(read_sequence(r))
    if cls is BallotMsg:
        code = r.u8()
        if code not in KIND_FROM_CODE:
            raise DecodeError(f"unknown ballot kind {code}")
        return BallotMsg(KIND_FROM_CODE[code])
    if cls in (Fast, P1a):
        return cls(read_ballot(r), r.u64())
    if cls is P1b:
        return P1b(read_ballot(r), read_ballot(r), read_sequence(r), read_sequence(r), _r_cert(r))
    if cls is P2aClassic:
        return P2aClassic(read_ballot(r), r.u64(), read_sequence(r))
    if cls is P2aFast:
        return P2aFast(read_sequence(r))
    if cls is Verify:
        return Verify(r.u64(), read_ballot(r), read_sequence(r), _r_verify_proof(r))
    if cls is P2b:
        return P2b(read_ballot(r), read_sequence(r), _r_cert(r))
    if cls is P2bUniv:
        return P2bUniv(read_ballot(r), read_sequence(r))
    if cls is Suspicion:
        return Suspicion(r.u64(), _r_suspicion(r))
    if cls is ViewChange:
        return ViewChange(r.u64(), _r_map(r, _r_suspicion), _r_view_change(r))
    if cls is Leader:
        return Leader(r.u64(), _r_map(r, _r_view_change))
    return CheckpointAck(CommandId(r.u32(), r.u64()))


def decode(data: bytes):
    try:
        r = Reader(data)
        m = _decode(r)
        r.done()
        return m
    except DecodeError as e:
        raise MalformedMessage(str(e)) from None
    except (ValueError, TypeError, OverflowError) as e:
        raise MalformedMessage(f"invalid field: {e}") from None


def empty_cert(ballot: Ballot | None = None) -> ProvenCert:
    return ProvenCert(ballot or ZERO_BALLOT, EMPTY, {}, EMPTY_BASE)
