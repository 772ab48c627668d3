import pytest

from bgplab.cluster import build_cluster
from bgplab.core import Command, CommandId
from bgplab.crypto import DeterministicProvider, sign_command

PROPOSER = 4
LEARNERS = (5, 6, 7, 8)


class Net:
    """Four replicas, one proposer, four learners, deterministic keys."""

    def __init__(self, n=4, f=1, learners=LEARNERS, **kw):
        self.provider = DeterministicProvider(0)
        self.cluster, self.keys = build_cluster(n, f, (n,), tuple(range(n + 1, n + 1 + len(learners))),
                                                self.provider, **kw)
        self.proposer = n
        self._seq = 0

    def cmd(self, r=(), w=(), u=False, payload=b"", proposer=None, seqno=None):
        if seqno is None:
            self._seq += 1
            seqno = self._seq
        pid = self.proposer if proposer is None else proposer
        c = Command(CommandId(pid, seqno), payload, frozenset(r), frozenset(w), u)
        return sign_command(self.provider, self.keys[pid], c)


@pytest.fixture
def net():
    return Net()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
