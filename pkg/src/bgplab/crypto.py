"""Signature providers and the signed artifacts the protocol passes around.

Signatures have to be transferable: a VERIFY proof produced by one acceptor is
relayed to learners and to the leader, who check it against the signer's
public key. Two providers are available. ``Ed25519Provider`` uses real
asymmetric keys; ``DeterministicProvider`` uses keyed HMACs behind a key
registry so seeded simulator runs are reproducible byte for byte. Neither
hands out another process's private key.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Collection, Mapping, Protocol

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed25519
from cryptography.hazmat.primitives import serialization

from .core import KEYSET, Ballot, CmdSequence, Command, CommutativityOracle, canonicalize
from .encoding import Writer, encode_command, write_command_body

EMPTY_BASE = hashlib.sha256(b"bgp/sequence/v1").digest()


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes = field(repr=False)


class SignatureProvider(Protocol):
    def keygen(self, pid: int) -> KeyPair: ...

    def sign(self, keys: KeyPair, statement: bytes) -> bytes: ...

    def verify(self, public: bytes, statement: bytes, sig: bytes) -> bool: ...


class DeterministicProvider:
    """HMAC-SHA256 signatures; verification recomputes through the key registry."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._secrets = {}

    def keygen(self, pid: int) -> KeyPair:
        secret = hashlib.sha256(b"det-key|%d|%d" % (self.seed, pid)).digest()
        public = b"det:" + hashlib.sha256(secret).digest()[:16]
        self._secrets[public] = secret
        return KeyPair(public, secret)

    def sign(self, keys: KeyPair, statement: bytes) -> bytes:
        return hmac.new(keys.private, statement, hashlib.sha256).digest()

    def verify(self, public: bytes, statement: bytes, sig: bytes) -> bool:
        secret = self._secrets.get(public)
        if secret is None or not isinstance(sig, (bytes, bytearray)):
            return False
        expected = hmac.new(secret, statement, hashlib.sha256).digest()
        return hmac.compare_digest(expected, bytes(sig))


class Ed25519Provider:
    def __init__(self, seed: int | None = None):
        self.seed = seed
        self._signers = {}

    def keygen(self, pid: int) -> KeyPair:
        if self.seed is None:
            priv = ed25519.Ed25519PrivateKey.generate()
        else:
            raw = hashlib.sha256(b"ed25519|%d|%d" % (self.seed, pid)).digest()
            priv = ed25519.Ed25519PrivateKey.from_private_bytes(raw)
        private = priv.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )
        public = priv.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        self._signers[private] = priv
        return KeyPair(public, private)

    def sign(self, keys: KeyPair, statement: bytes) -> bytes:
        priv = self._signers.get(keys.private)
        if priv is None:
            priv = ed25519.Ed25519PrivateKey.from_private_bytes(keys.private)
            self._signers[keys.private] = priv
        return priv.sign(statement)

    def verify(self, public: bytes, statement: bytes, sig: bytes) -> bool:
        try:
            ed25519.Ed25519PublicKey.from_public_bytes(public).verify(sig, statement)
            return True
        except (InvalidSignature, ValueError, TypeError):
            return False


def make_provider(name: str, seed: int = 0) -> SignatureProvider:
    if name == "deterministic":
        return DeterministicProvider(seed)
    if name == "ed25519":
        return Ed25519Provider(seed)
    raise ValueError(f"unknown signature provider {name!r}")


# --- statements -----------------------------------------------------------

def verify_statement(ballot: Ballot, digest: bytes) -> bytes:
    return Writer().text("verify").u64(ballot.view).u64(ballot.number).raw(digest).getvalue()


def suspicion_statement(view: int) -> bytes:
    return Writer().text("suspicion").u64(view).getvalue()


def view_change_statement(view: int) -> bytes:
    return Writer().text("view_change").u64(view).getvalue()


def command_statement(c: Command) -> bytes:
    w = Writer().text("command")
    write_command_body(w, c)
    return w.getvalue()


def chain_digest(base: bytes, cmds) -> bytes:
    h = base
    for c in cmds:
        h = hashlib.sha256(h + encode_command(c)).digest()
    return h


_digest_cache: dict = {}


def sequence_digest(
    s: CmdSequence, oracle: CommutativityOracle = KEYSET, base: bytes = EMPTY_BASE
) -> bytes:
    """Digest of the canonical form of s, chained from ``base``.

    Chaining lets a checkpointed acceptor keep only the digest of the history
    it discarded: digest(prefix + rest) == chain(digest(prefix), rest) whenever
    the canonical form keeps the prefix first.
    """
    key = (s.items, oracle, base)
    d = _digest_cache.get(key)
    if d is None:
        d = chain_digest(base, canonicalize(s, oracle))
        if len(_digest_cache) > 50_000:
            _digest_cache.clear()
        _digest_cache[key] = d
    return d


# --- signed artifacts ------------------------------------------------------

@dataclass(frozen=True)
class VerifyProof:
    acceptor: int
    ballot: Ballot
    value_digest: bytes
    sig: bytes


@dataclass(frozen=True)
class SuspicionProof:
    acceptor: int
    view: int
    sig: bytes


@dataclass(frozen=True)
class ViewChangeProof:
    acceptor: int
    new_view: int
    sig: bytes


@dataclass(frozen=True)
class ProvenCert:
    """N-f VERIFY proofs for one (ballot, equivalence class of value).

    ``base`` is the chained digest the value's digest starts from; it only
    differs from EMPTY_BASE after a checkpoint discarded earlier history.
    """

    ballot: Ballot
    value: CmdSequence
    proofs: Mapping[int, VerifyProof] = field(default_factory=dict)
    base: bytes = EMPTY_BASE


@dataclass(frozen=True)
class LeaderCert:
    view: int
    proofs: Mapping[int, ViewChangeProof] = field(default_factory=dict)


class Keyring:
    """Public-key directory plus a provider; memoizes command signature checks."""

    def __init__(self, provider: SignatureProvider, public_keys: Mapping[int, bytes]):
        self.provider = provider
        self.public_keys = dict(public_keys)
        self._cmd_ok = {}

    def verify(self, pid: int, statement: bytes, sig: bytes) -> bool:
        pub = self.public_keys.get(pid)
        if pub is None:
            return False
        return self.provider.verify(pub, statement, sig)

    def command_ok(self, c: Command) -> bool:
        ok = self._cmd_ok.get(c)
        if ok is None:
            ok = self.verify(c.id.proposer, command_statement(c), c.sig)
            self._cmd_ok[c] = ok
        return ok

    def sequence_ok(self, s) -> bool:
        return all(self.command_ok(c) for c in s)


def sign(provider: SignatureProvider, keys: KeyPair, statement: bytes) -> bytes:
    return provider.sign(keys, statement)


def verify(provider: SignatureProvider, public: bytes, statement: bytes, sig: bytes) -> bool:
    try:
        return provider.verify(public, statement, sig)
    except Exception:
        return False


def sign_command(provider, keys: KeyPair, c: Command) -> Command:
    return Command(c.id, c.payload, c.read_keys, c.write_keys, c.universal,
                   provider.sign(keys, command_statement(c)))


def make_verify_proof(provider, keys: KeyPair, acceptor: int, ballot: Ballot, digest: bytes) -> VerifyProof:
    return VerifyProof(acceptor, ballot, digest, provider.sign(keys, verify_statement(ballot, digest)))


def make_suspicion(provider, keys: KeyPair, acceptor: int, view: int) -> SuspicionProof:
    return SuspicionProof(acceptor, view, provider.sign(keys, suspicion_statement(view)))


def make_view_change(provider, keys: KeyPair, acceptor: int, new_view: int) -> ViewChangeProof:
    return ViewChangeProof(acceptor, new_view, provider.sign(keys, view_change_statement(new_view)))


def verify_proof_ok(keyring: Keyring, p: VerifyProof, ballot: Ballot, digest: bytes) -> bool:
    return (
        p.ballot == ballot
        and p.value_digest == digest
        and keyring.verify(p.acceptor, verify_statement(ballot, digest), p.sig)
    )


def suspicion_ok(keyring: Keyring, p: SuspicionProof, view: int) -> bool:
    return p.view == view and keyring.verify(p.acceptor, suspicion_statement(view), p.sig)


def view_change_ok(keyring: Keyring, p: ViewChangeProof, view: int) -> bool:
    return p.new_view == view and keyring.verify(p.acceptor, view_change_statement(view), p.sig)


def count_valid(proofs: Mapping, members: Collection[int], check) -> int:
    """Number of distinct known members whose entry is keyed by its own id and passes check."""
    return sum(
        1 for pid, p in proofs.items()
        if pid in members and getattr(p, "acceptor", None) == pid and check(p)
    )


def check_proven_cert(
    cert: ProvenCert,
    keyring: Keyring,
    acceptors: Collection[int],
    f: int,
    oracle: CommutativityOracle = KEYSET,
) -> bool:
    digest = sequence_digest(cert.value, oracle, cert.base)
    valid = count_valid(
        cert.proofs, acceptors, lambda p: verify_proof_ok(keyring, p, cert.ballot, digest)
    )
    return valid >= len(acceptors) - f


def check_leader_cert(cert: LeaderCert, keyring: Keyring, acceptors: Collection[int], threshold: int) -> bool:
    valid = count_valid(cert.proofs, acceptors, lambda p: view_change_ok(keyring, p, cert.view))
    return valid >= threshold
