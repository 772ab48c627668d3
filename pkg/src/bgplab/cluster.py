"""Static membership shared by every role: who is who, quorum sizes, keys."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import KEYSET, CommutativityOracle
from .crypto import Keyring, SignatureProvider


class ConfigError(ValueError):
    pass


@dataclass
class Cluster:
    n: int
    f: int
    proposers: tuple
    learners: tuple
    provider: SignatureProvider
    keyring: Keyring
    oracle: CommutativityOracle = KEYSET
    # "quorum" adopts leadership on N-f view-change proofs, "f+1" on more than f.
    leader_cert_threshold: str = "quorum"
    acceptors: tuple = field(init=False)

    def __post_init__(self):
        if self.f < 0 or self.n < 3 * self.f + 1:
            raise ConfigError(f"need N >= 3f+1 acceptors, got N={self.n}, f={self.f}")
        if self.leader_cert_threshold not in ("quorum", "f+1"):
            raise ConfigError(f"unknown leader_cert_threshold {self.leader_cert_threshold!r}")
        self.acceptors = tuple(range(self.n))

    @property
    def quorum(self) -> int:
        return self.n - self.f

    @property
    def leader_threshold(self) -> int:
        return self.quorum if self.leader_cert_threshold == "quorum" else self.f + 1

    def leader_of(self, view: int) -> int:
        return view % self.n


def build_cluster(n, f, proposers, learners, provider, oracle=KEYSET, leader_cert_threshold="quorum"):
    """Generate keys for every process; returns (cluster, {pid: KeyPair})."""
    pids = list(range(n)) + list(proposers) + list(learners)
    keys = {pid: provider.keygen(pid) for pid in pids}
    keyring = Keyring(provider, {pid: kp.public for pid, kp in keys.items()})
    cluster = Cluster(n, f, tuple(proposers), tuple(learners), provider, keyring,
                      oracle, leader_cert_threshold)
    return cluster, keys
