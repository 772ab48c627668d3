"""Byzantine Generalized Paxos lab: role state machines, wire codec and simulator."""

__version__ = "0.1.0"
