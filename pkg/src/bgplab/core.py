"""Command and sequence algebra.

Everything in here is a pure function over immutable values: commutativity,
equivalence (same commands, same order on every interfering pair), eq-prefix,
canonical forms and the handful of sequence manipulations the roles share.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

# Payloads starting with this tag mark checkpoint commands.
CHECKPOINT_TAG = b"\x00bgp:checkpoint:"


class CommandId(NamedTuple):
    proposer: int
    seqno: int

    def __str__(self):
        return f"{self.proposer}.{self.seqno}"


@dataclass(frozen=True, eq=False)
class Command:
    id: CommandId
    payload: bytes = b""
    read_keys: frozenset = frozenset()
    write_keys: frozenset = frozenset()
    universal: bool = False
    sig: bytes = b""
    # derived, cached for the interference test
    is_checkpoint: bool = field(default=False, init=False, compare=False, repr=False)
    touched: frozenset = field(default=frozenset(), init=False, compare=False, repr=False)
    special: bool = field(default=False, init=False, compare=False, repr=False)

    def __post_init__(self):
        rk, wk = frozenset(self.read_keys), frozenset(self.write_keys)
        object.__setattr__(self, "read_keys", rk)
        object.__setattr__(self, "write_keys", wk)
        object.__setattr__(self, "touched", rk | wk)
        object.__setattr__(self, "is_checkpoint", self.payload.startswith(CHECKPOINT_TAG))
        object.__setattr__(self, "special", self.universal or self.is_checkpoint)
        if self.universal and (rk or wk):
            raise ValueError("universal commands cannot carry a key footprint")
        if self.universal and self.is_checkpoint:
            raise ValueError("a checkpoint command is never universal")

    def _key(self):
        return (self.id, self.payload, self.read_keys, self.write_keys, self.universal, self.sig)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Command):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        flags = "U" if self.universal else ("C*" if self.is_checkpoint else "")
        return f"Cmd({self.id}{' ' + flags if flags else ''})"


def checkpoint_payload(generation: int) -> bytes:
    return CHECKPOINT_TAG + generation.to_bytes(8, "big")


def checkpoint_generation(cmd: Command) -> int:
    return int.from_bytes(cmd.payload[len(CHECKPOINT_TAG):len(CHECKPOINT_TAG) + 8], "big")


class BallotKind(str, enum.Enum):
    CLASSIC = "classic"
    FAST = "fast"


@dataclass(frozen=True, eq=False)
class Ballot:
    """One extension round. Ordered and compared on (view, number); kind is metadata."""

    view: int
    number: int
    kind: BallotKind = BallotKind.CLASSIC

    @property
    def key(self):
        return (self.view, self.number)

    def __eq__(self, other):
        if not isinstance(other, Ballot):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __lt__(self, other):
        return self.key < other.key

    def __le__(self, other):
        return self.key <= other.key

    def __gt__(self, other):
        return self.key > other.key

    def __ge__(self, other):
        return self.key >= other.key

    def __repr__(self):
        return f"B({self.view},{self.number},{self.kind.value})"


ZERO_BALLOT = Ballot(0, 0, BallotKind.CLASSIC)


@dataclass(frozen=True)
class CmdSequence:
    items: tuple = ()
    _pos: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        pos = {}
        for i, c in enumerate(items):
            if c.id in pos:
                raise ValueError(f"duplicate command id {c.id} in sequence")
            pos[c.id] = i
        object.__setattr__(self, "_pos", pos)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return CmdSequence(self.items[i])
        return self.items[i]

    def __contains__(self, x):
        if isinstance(x, Command):
            return self._pos.get(x.id) is not None and self.items[self._pos[x.id]] == x
        return x in self._pos

    def __bool__(self):
        return bool(self.items)

    def __repr__(self):
        return "[" + ", ".join(repr(c) for c in self.items) + "]"

    @property
    def ids(self) -> tuple:
        return tuple(c.id for c in self.items)

    def id_set(self) -> frozenset:
        return frozenset(self._pos)

    def index(self, cid: CommandId) -> int:
        return self._pos[cid]

    def get(self, cid: CommandId):
        i = self._pos.get(cid)
        return None if i is None else self.items[i]

    def restrict(self, ids) -> "CmdSequence":
        ids = set(ids)
        return CmdSequence(c for c in self.items if c.id in ids)

    def without(self, other: "CmdSequence") -> "CmdSequence":
        """Commands of self not present in other, in self's order."""
        return CmdSequence(c for c in self.items if c.id not in other._pos)


EMPTY = CmdSequence()


def seq(*cmds: Command) -> CmdSequence:
    return CmdSequence(cmds)


@dataclass(frozen=True)
class CommutativityOracle:
    """Interference relation over commands.

    ``keyset`` mode derives interference from read/write footprints; ``explicit``
    mode uses a symmetric set of interfering id pairs. Universal commands
    interfere with nothing; checkpoint commands interfere with everything else.
    """

    mode: str = "keyset"
    relation: frozenset = frozenset()

    def __post_init__(self):
        if self.mode not in ("keyset", "explicit"):
            raise ValueError(f"unknown commutativity mode {self.mode!r}")
        object.__setattr__(
            self, "relation", frozenset(frozenset(p) for p in self.relation)
        )

    @classmethod
    def explicit(cls, pairs: Iterable) -> "CommutativityOracle":
        return cls("explicit", frozenset(frozenset(p) for p in pairs))

    def interferes(self, a: Command, b: Command) -> bool:
        if a.special or b.special:
            if a.universal or b.universal or a.id == b.id:
                return False
            return True
        if a.id == b.id:
            return False
        if self.mode == "explicit":
            return frozenset((a.id, b.id)) in self.relation
        return not (a.write_keys.isdisjoint(b.touched) and b.write_keys.isdisjoint(a.touched))


KEYSET = CommutativityOracle()


class IncomparableProvenSequences(Exception):
    """Two proven sequences are neither equivalent nor extensions of one another."""

    def __init__(self, first, second):
        super().__init__(f"incomparable proven sequences {first!r} and {second!r}")
        self.first = first
        self.second = second


def commute(a: Command, b: Command, o: CommutativityOracle = KEYSET) -> bool:
    return not o.interferes(a, b)


def _same_commands(xs, y: CmdSequence):
    """Positions in y of the commands xs, or None if one is missing or differs."""
    pos, items = y._pos, y.items
    out = []
    for c in xs:
        i = pos.get(c.id)
        if i is None:
            return None
        d = items[i]
        if d is not c and d != c:
            return None
        out.append(i)
    return out


def equivalent(s1: CmdSequence, s2: CmdSequence, o: CommutativityOracle = KEYSET) -> bool:
    items = s1.items
    n = len(items)
    if n != len(s2.items):
        return False
    where = _same_commands(items, s2)
    if where is None:
        return False
    inter = o.interferes
    # only pairs that the two orders disagree on need the interference test
    for i in range(n):
        wi = where[i]
        for j in range(i + 1, n):
            if where[j] < wi and inter(items[i], items[j]):
                return False
    return True


def canonicalize(s: CmdSequence, o: CommutativityOracle = KEYSET) -> CmdSequence:
    """Smallest-id-first topological sort of the interference order induced by s."""
    items = s.items
    n = len(items)
    if n < 2:
        return s
    indeg = [0] * n
    succ = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if o.interferes(items[i], items[j]):
                succ[i].append(j)
                indeg[j] += 1
    ready = [(items[i].id, i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        _, i = heapq.heappop(ready)
        out.append(items[i])
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, (items[j].id, j))
    return CmdSequence(out)


def eq_prefix(x: CmdSequence, y: CmdSequence, o: CommutativityOracle = KEYSET) -> bool:
    """x, then the rest of y, is a reordering of y.

    Matching only the restriction of y to x's commands is not enough: an
    interfering command of y outside x must not sit in front of one inside x.
    """
    xs = x.items
    n = len(xs)
    if n > len(y.items):
        return False
    where = _same_commands(xs, y)
    if where is None:
        return False
    inter = o.interferes
    for i in range(n):
        wi = where[i]
        for j in range(i + 1, n):
            if where[j] < wi and inter(xs[i], xs[j]):
                return False
    mine = x._pos
    for b_at, b in enumerate(y.items):
        if b.id in mine:
            continue
        for i, a in enumerate(xs):
            if where[i] > b_at and inter(a, b):
                return False
    return True


def concat(s: CmdSequence, t: CmdSequence) -> CmdSequence:
    if not t:
        return s
    return CmdSequence(s.items + tuple(c for c in t if c.id not in s._pos))


def merge_sequences(old: CmdSequence, new: CmdSequence) -> CmdSequence:
    out = list(old.items)
    seen = set(old.ids)
    for c in new:
        if c.id not in seen:
            out.append(c)
            seen.add(c.id)
    return CmdSequence(out)


def remove_duplicates(cmds: Iterable[Command]) -> CmdSequence:
    out, seen = [], set()
    for c in cmds:
        if c.id not in seen:
            seen.add(c.id)
            out.append(c)
    return CmdSequence(out)


def is_universally_commutative(s: Iterable[Command]) -> bool:
    return all(c.universal for c in s)


def comparable(x: CmdSequence, y: CmdSequence, o: CommutativityOracle = KEYSET) -> bool:
    return eq_prefix(x, y, o) or eq_prefix(y, x, o)


def largest_seq(
    proven_by_acceptor: Mapping[int, CmdSequence], o: CommutativityOracle = KEYSET
) -> CmdSequence:
    seqs = list(proven_by_acceptor.values())
    if not seqs:
        return EMPTY
    for i in range(len(seqs)):
        for j in range(i + 1, len(seqs)):
            if not comparable(seqs[i], seqs[j], o):
                raise IncomparableProvenSequences(seqs[i], seqs[j])
    top = max(len(s) for s in seqs)
    longest = [s for s in seqs if len(s) == top]
    if all(s == longest[0] for s in longest):
        return longest[0]
    return canonicalize(longest[0], o)


def extensible(s: CmdSequence, t: CmdSequence, o: CommutativityOracle = KEYSET) -> bool:
    """True iff s and t can be extended to equivalent sequences.

    Appending the missing commands of each side in the other's order is the
    least constrained common extension; if that pair is not equivalent, none is.
    """
    for c in s:
        other = t.get(c.id)
        if other is not None and other != c:
            return False
    return equivalent(concat(s, t.without(s)), concat(t, s.without(t)), o)
