from typing import Dict, Hashable, List


def replica_count(f: int) -> int:
    """n = 3f+1."""
    if f < 0:
        raise ValueError("f must be non-negative")
    return 3 * f + 1


def max_faulty(n: int) -> int:
    return (n - 1) // 3


def primary_of(view: int, n: int) -> int:
    return view % n


def prepare_quorum(f: int) -> int:
    """Matching PREPAREs needed from other replicas."""
    return 2 * f


def commit_quorum(f: int) -> int:
    """Matching COMMITs needed from other replicas."""
    return 2 * f


def decision_size(f: int) -> int:
    """Proposers in an NPRE decision set, primary included."""
    return 2 * f + 1


def reply_quorum(f: int) -> int:
    return f + 1


class VoteCertificate:
    """
    Votes for one round keyed by sender.

    The first vote of each sender is kept; the owner's own vote is stored but
    never counted toward the quorum.
    """

    def __init__(self, owner: int):
        self.owner = owner
        self.votes: Dict[int, Hashable] = {}

    def add(self, sender: int, value: Hashable) -> bool:
        if sender in self.votes:
            return False
        self.votes[sender] = value
        return True

    def count(self, value: Hashable) -> int:
        return sum(1 for s, v in self.votes.items() if s != self.owner and v == value)

    def reached(self, value: Hashable, quorum: int) -> bool:
        return self.count(value) >= quorum

    def senders(self, value: Hashable) -> List[int]:
        return sorted(s for s, v in self.votes.items() if s != self.owner and v == value)

    def __len__(self) -> int:
        return len(self.votes)
