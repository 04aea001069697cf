"""Shared skip-graph nodes and their atomic successor references.

Each level of a node holds one immutable ``(successor, marked, valid)`` tuple.
Reading ``node.next[level]`` is a single atomic load; every update goes through
one of the compare-and-swap helpers below, which serialize on a striped lock so
that the comparison and the store are indivisible.
"""

from __future__ import annotations

import itertools
import threading
import time
from typing import List, Optional, Tuple

KEY_MIN = 0
KEY_MAX = (1 << 64) - 1

HEAD_OWNER = 0

SUCC, MARKED, VALID = 0, 1, 2

Ref = Tuple[Optional["SharedNode"], bool, bool]

_N_STRIPES = 128
_STRIPES = [threading.Lock() for _ in range(_N_STRIPES)]

# global sequence used to order transition-log entries across threads
_log_seq = itertools.count()


def _lock_for(node: "SharedNode") -> threading.Lock:
    return _STRIPES[(id(node) >> 5) % _N_STRIPES]


def now_ns() -> int:
    return time.monotonic_ns()


def check_user_key(key: int) -> None:
    if not (KEY_MIN < key < KEY_MAX):
        raise ValueError(f"key {key!r} outside the user key range ({KEY_MIN}, {KEY_MAX})")


class SharedNode:
    """A node of the shared skip graph.

    ``label`` is the membership vector of the skip list this node belongs to;
    its length-``i`` suffix names the level-``i`` list.  Head sentinels carry
    the label of the single list they start and ``head_level`` tells which.
    """

    __slots__ = (
        "key",
        "value",
        "next",
        "alloc_ts",
        "inserted",
        "owner",
        "top_level",
        "label",
        "head_level",
        "log",
    )

    def __init__(
        self,
        key: int,
        value: object = None,
        *,
        max_level: int,
        top_level: int,
        owner: int,
        label: int = 0,
        alloc_ts: Optional[int] = None,
        head_level: int = -1,
        trace: bool = False,
    ) -> None:
        self.key = key
        self.value = value
        self.next: List[Ref] = [(None, False, True)] * (max_level + 1)
        self.alloc_ts = now_ns() if alloc_ts is None else alloc_ts
        self.inserted = False
        self.owner = owner
        self.top_level = top_level
        self.label = label
        self.head_level = head_level
        self.log: Optional[list] = [] if trace else None

    def __repr__(self) -> str:
        succ, m, v = self.next[0]
        state = ("M" if m else "-") + ("V" if v else "I")
        return f"<SharedNode key={self.key} {state} owner={self.owner} top={self.top_level}>"

    @property
    def is_head(self) -> bool:
        return self.head_level >= 0

    @property
    def is_sentinel(self) -> bool:
        return self.head_level >= 0 or self.key == KEY_MAX

    # -- reads -------------------------------------------------------------

    def get_next(self, level: int) -> "SharedNode":
        return self.next[level][SUCC]

    def get_mark(self, level: int) -> bool:
        return self.next[level][MARKED]

    def get_valid(self, level: int) -> bool:
        return self.next[level][VALID]

    def get_mark_valid(self, level: int) -> Tuple[bool, bool]:
        ref = self.next[level]
        return ref[MARKED], ref[VALID]

    # -- writes ------------------------------------------------------------

    def set_next(self, level: int, succ: "SharedNode") -> None:
        """Plain store; only legal while the node is private to its allocator."""
        _, m, v = self.next[level]
        self.next[level] = (succ, m, v)

    def cas_next(self, level: int, expected: Optional["SharedNode"], new: "SharedNode") -> bool:
        """Swing an unmarked successor from ``expected`` to ``new``, keeping ``valid``."""
        with _lock_for(self):
            succ, m, v = self.next[level]
            if m or succ is not expected:
                return False
            self.next[level] = (new, False, v)
            return True

    def cas_mark(self, level: int) -> bool:
        """Set the marked bit at ``level`` if it was clear."""
        with _lock_for(self):
            succ, m, v = self.next[level]
            if m:
                return False
            self.next[level] = (succ, True, v)
            if level == 0 and self.log is not None:
                self.log.append((next(_log_seq), (False, v), (True, v)))
            return True

    def cas_mark_valid(
        self, level: int, expected: Tuple[bool, bool], new: Tuple[bool, bool]
    ) -> bool:
        """Atomically replace the ``(marked, valid)`` pair, leaving the successor."""
        with _lock_for(self):
            succ, m, v = self.next[level]
            if (m, v) != expected:
                return False
            self.next[level] = (succ, new[0], new[1])
            if level == 0 and self.log is not None:
                self.log.append((next(_log_seq), expected, new))
            return True


# Level-0 (marked, valid) transitions a node may legally take in lazy mode.
LAZY_TRANSITIONS = frozenset(
    {
        ((False, True), (False, False)),
        ((False, False), (False, True)),
        ((False, False), (True, False)),
    }
)

# Non-lazy removal and priority-queue deletion mark a live node in one step.
DIRECT_DELETE = ((False, True), (True, False))
LEGAL_TRANSITIONS = LAZY_TRANSITIONS | {DIRECT_DELETE}
