"""Canonical byte encoding shared by the codec, digests and signature statements.

Fixed-width big-endian integers, u32 length prefixes for byte strings and
repeated fields, key sets written in sorted order. Readers reject anything
non-canonical so every value has exactly one encoding.
"""

from __future__ import annotations

import struct

from .core import Ballot, BallotKind, CmdSequence, Command, CommandId

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

MAX_COUNT = 1 << 20

KIND_CODES = {BallotKind.CLASSIC: 0, BallotKind.FAST: 1}
KIND_FROM_CODE = {v: k for k, v in KIND_CODES.items()}


class DecodeError(ValueError):
    pass


class Writer:
    def __init__(self):
        self.parts = []

    def u8(self, v: int):
        self.parts.append(_U8.pack(v))
        return self

    def u32(self, v: int):
        self.parts.append(_U32.pack(v))
        return self

    def u64(self, v: int):
        self.parts.append(_U64.pack(v))
        return self

    def raw(self, b: bytes):
        self.parts.append(b)
        return self

    def blob(self, b: bytes):
        self.u32(len(b))
        self.parts.append(bytes(b))
        return self

    def text(self, s: str):
        return self.blob(s.encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(bytes(data))
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError(f"invalid utf-8: {e}") from None

    def count(self) -> int:
        n = self.u32()
        if n > MAX_COUNT or n > len(self.data) - self.pos:
            raise DecodeError(f"implausible element count {n}")
        return n

    def boolean(self) -> bool:
        v = self.u8()
        if v > 1:
            raise DecodeError(f"invalid boolean byte {v}")
        return bool(v)

    def done(self):
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")


def write_keys(w: Writer, keys):
    ks = sorted(keys)
    w.u32(len(ks))
    for k in ks:
        w.text(k)


def read_keys(r: Reader) -> frozenset:
    out = []
    for _ in range(r.count()):
        k = r.text()
        if out and k <= out[-1]:
            raise DecodeError("key set not in canonical order")
        out.append(k)
    return frozenset(out)


def write_command_body(w: Writer, c: Command):
    w.u32(c.id.proposer).u64(c.id.seqno).blob(c.payload)
    write_keys(w, c.read_keys)
    write_keys(w, c.write_keys)
    w.u8(1 if c.universal else 0)


def write_command(w: Writer, c: Command):
    write_command_body(w, c)
    w.blob(c.sig)


def read_command(r: Reader) -> Command:
    cid = CommandId(r.u32(), r.u64())
    payload = r.blob()
    rk = read_keys(r)
    wk = read_keys(r)
    universal = r.boolean()
    sig = r.blob()
    try:
        return Command(cid, payload, rk, wk, universal, sig)
    except ValueError as e:
        raise DecodeError(str(e)) from None


def write_sequence(w: Writer, s: CmdSequence):
    w.u32(len(s))
    for c in s:
        write_command(w, c)


def read_sequence(r: Reader) -> CmdSequence:
    cmds = [read_command(r) for _ in range(r.count())]
    try:
        return CmdSequence(cmds)
    except ValueError as e:
        raise DecodeError(str(e)) from None


def write_ballot(w: Writer, b: Ballot):
    w.u64(b.view).u64(b.number).u8(KIND_CODES[b.kind])


def read_ballot(r: Reader) -> Ballot:
    view, number, code = r.u64(), r.u64(), r.u8()
    if code not in KIND_FROM_CODE:
        raise DecodeError(f"unknown ballot kind {code}")
    return Ballot(view, number, KIND_FROM_CODE[code])


def encode_command(c: Command) -> bytes:
    w = Writer()
    write_command(w, c)
    return w.getvalue()


def encode_sequence(s: CmdSequence) -> bytes:
    w = Writer()
    write_sequence(w, s)
    return w.getvalue()
