"""The shared lock-free skip graph.

Level ``i`` holds ``2**i`` linked lists; the list a node occupies at level
``i`` is named by the low ``i`` bits of its ``label`` (the membership vector
of the thread that inserted it).  The single-list variants collapse every
label to 0, which turns the structure into an ordinary skip list (or, with
``max_level == 0``, a linked list).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

from .metrics import MetricsLedger
from .node import HEAD_OWNER, KEY_MAX, KEY_MIN, SharedNode, now_ns

VARIANTS = ("dense", "sparse", "control-skip-list", "linked-list")

# ~350,000 cycles at 3.0 GHz, per thread
COMMISSION_NS_PER_THREAD = 117_000


def max_level_for(nthreads: int) -> int:
    if nthreads < 1:
        raise ValueError("need at least one thread")
    return max(0, math.ceil(math.log2(nthreads)) - 1)


@dataclass(frozen=True)
class SkipGraphConfig:
    max_level: int
    variant: str = "dense"
    commission_period_ns: int = 0
    promotion_prob: Fraction = Fraction(1, 2)
    trace: bool = False

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        if self.variant == "linked-list" and self.max_level != 0:
            raise ValueError("linked-list variant requires max_level == 0")
        if not 0 < self.promotion_prob < 1:
            raise ValueError("promotion_prob must lie in (0, 1)")

    @classmethod
    def for_threads(
        cls,
        nthreads: int,
        variant: str = "dense",
        commission_period_ns: Optional[int] = None,
        max_level: Optional[int] = None,
        **kw,
    ) -> "SkipGraphConfig":
        if max_level is None:
            max_level = 0 if variant == "linked-list" else max_level_for(nthreads)
        if commission_period_ns is None:
            commission_period_ns = COMMISSION_NS_PER_THREAD * nthreads
        return cls(max_level, variant, commission_period_ns, **kw)

    @property
    def partitioned(self) -> bool:
        return self.variant in ("dense", "sparse")

    @property
    def randomized_height(self) -> bool:
        return self.variant in ("sparse", "control-skip-list")


@dataclass
class SearchResult:
    predecessors: List[SharedNode]
    middle: List[SharedNode]
    successors: List[SharedNode]
    found: bool = False


@dataclass
class Accessor:
    """Minimal view of the calling thread the shared structure needs."""

    tid: int = 0
    vector: int = 0
    ledger: Optional[MetricsLedger] = None
    rng: random.Random = field(default_factory=random.Random)


class SkipGraph:
    def __init__(self, config: SkipGraphConfig) -> None:
        self.config = config
        self.max_level = config.max_level
        self.commission_period_ns = config.commission_period_ns
        self.partitioned = config.partitioned
        ml = self.max_level
        self.tail = SharedNode(KEY_MAX, max_level=ml, top_level=ml, owner=HEAD_OWNER)
        self.tail.inserted = True
        self.heads: List[List[SharedNode]] = []
        for level in range(ml + 1):
            row = []
            for label in range((1 << level) if self.partitioned else 1):
                h = SharedNode(
                    KEY_MIN, max_level=ml, top_level=level, owner=HEAD_OWNER,
                    label=label, head_level=level,
                )
                h.next[level] = (self.tail, False, True)
                if level != 0:
                    h.next[0] = (self.tail, False, True)
                h.inserted = True
                row.append(h)
            self.heads.append(row)

    # -- list naming -------------------------------------------------------

    def list_label(self, vector: int, level: int) -> int:
        if not self.partitioned:
            return 0
        return vector & ((1 << level) - 1)

    def head(self, level: int, vector: int) -> SharedNode:
        return self.heads[level][self.list_label(vector, level)]

    def list_id(self, node: SharedNode, level: int):
        return (level, self.list_label(node.label, level))

    def on_list(self, node: SharedNode, level: int, vector: int) -> bool:
        """Whether ``node`` is linked in the level-``level`` list of ``vector``'s skip list."""
        if node.top_level < level or node.next[level][0] is None:
            return False
        if level and not node.inserted:
            return False
        return self.list_label(node.label, level) == self.list_label(vector, level)

    # -- construction ------------------------------------------------------

    def draw_top_level(self, rng: random.Random) -> int:
        if not self.config.randomized_height:
            return self.max_level
        p = float(self.config.promotion_prob)
        level = 0
        while level < self.max_level and rng.random() < p:
            level += 1
        return level

    def new_node(self, key: int, value: object, acc: Accessor, top_level: Optional[int] = None) -> SharedNode:
        if top_level is None:
            top_level = self.draw_top_level(acc.rng)
        return SharedNode(
            key, value, max_level=self.max_level, top_level=top_level, owner=acc.tid,
            label=acc.vector if self.partitioned else 0, trace=self.config.trace,
        )

    # -- retirement --------------------------------------------------------

    def retire(self, node: SharedNode, acc: Accessor) -> bool:
        ok = node.cas_mark_valid(0, (False, False), (True, False))
        led = acc.ledger
        if led is not None:
            led.cas(node, ok, self.list_id(node, 0))
        if not ok:
            return False
        self.mark_upper_levels(node, acc)
        return True

    def mark_upper_levels(self, node: SharedNode, acc: Accessor) -> None:
        led = acc.ledger
        for level in range(node.top_level, 0, -1):
            while not node.next[level][1]:
                ok = node.cas_mark(level)
                if led is not None:
                    led.cas(node, ok, self.list_id(node, level))

    def check_retire(self, node: SharedNode, now: int, acc: Accessor) -> bool:
        if node.owner != acc.tid or node.is_sentinel:
            return False
        _, marked, valid = node.next[0]
        if marked or valid:
            return False
        if now - node.alloc_ts <= self.commission_period_ns:
            return False
        return self.retire(node, acc)

    # -- searches ----------------------------------------------------------

    def _skip_dead(self, current: SharedNode, level: int, now: int, acc: Accessor) -> SharedNode:
        led = acc.ledger
        while current.key != KEY_MAX:
            if led is not None:
                led.read(current)
            if current.next[0][1] or self.check_retire(current, now, acc):
                current = current.next[level][0]
            else:
                break
        return current

    def _entry(self, previous: SharedNode, level: int, key: int, start, vector: int) -> SharedNode:
        if previous.head_level > level:
            previous = self.head(level, vector)
        if (
            start is not None
            and previous.key < start.key < key
            and self.on_list(start, level, vector)
        ):
            previous = start
        return previous

    def lazy_relink_search(
        self,
        key: int,
        start: Optional[SharedNode],
        acc: Accessor,
        vector: Optional[int] = None,
        now: Optional[int] = None,
    ) -> SearchResult:
        """Top-down search recording, per level, predecessor, first observed
        successor (``middle``) and first live successor.

        Nodes found level-0 marked, or retired on the way, are walked over so
        the caller can replace the whole chain with one compare-and-swap.
        """
        if vector is None:
            vector = acc.vector
        if now is None:
            now = now_ns()
        n = self.max_level + 1
        preds: List[SharedNode] = [None] * n  # type: ignore[list-item]
        middle: List[SharedNode] = [None] * n  # type: ignore[list-item]
        succs: List[SharedNode] = [None] * n  # type: ignore[list-item]
        led = acc.ledger
        previous = self.head(self.max_level, vector)
        for level in range(self.max_level, -1, -1):
            previous = self._entry(previous, level, key, start, vector)
            if led is not None:
                led.read(previous)
            current = original = previous.next[level][0]
            current = self._skip_dead(current, level, now, acc)
            while current.key < key:
                previous = current
                current = original = previous.next[level][0]
                current = self._skip_dead(current, level, now, acc)
            preds[level] = previous
            middle[level] = original
            succs[level] = current
        s0 = succs[0]
        found = s0.key == key and not s0.next[0][1]
        return SearchResult(preds, middle, succs, found)

    def retire_search(
        self,
        key: int,
        start: Optional[SharedNode],
        acc: Accessor,
        vector: Optional[int] = None,
        now: Optional[int] = None,
    ) -> Optional[SharedNode]:
        """First level-0-unmarked node carrying ``key`` met on the way down."""
        if vector is None:
            vector = acc.vector
        if now is None:
            now = now_ns()
        led = acc.ledger
        previous = self.head(self.max_level, vector)
        for level in range(self.max_level, -1, -1):
            previous = self._entry(previous, level, key, start, vector)
            if led is not None:
                led.read(previous)
            current = self._skip_dead(previous.next[level][0], level, now, acc)
            while current.key < key:
                previous = current
                current = self._skip_dead(previous.next[level][0], level, now, acc)
            if current.key == key and not current.next[0][1]:
                return current
        return None

    # -- linking -----------------------------------------------------------

    def link_level0(self, pred: SharedNode, middle: SharedNode, node: SharedNode, acc: Accessor) -> bool:
        """Swing ``pred.next[0]`` from ``middle`` to ``node``.

        ``node.next[0]`` must already point past any marked chain starting at
        ``middle``; success unlinks that whole chain.
        """
        ok = pred.cas_next(0, middle, node)
        if acc.ledger is not None:
            acc.ledger.cas(pred, ok, self.list_id(pred, 0))
        return ok

    def finish_insert(
        self,
        node: SharedNode,
        start: Optional[SharedNode],
        acc: Accessor,
        restart=None,
    ) -> bool:
        """Link a level-0 node at levels ``1..top_level`` of its own skip list.

        ``restart`` (optional) is called after a failed link to obtain a fresh
        start node.  Returns False if the node was found marked meanwhile; the
        node is flagged ``inserted`` either way.
        """
        key = node.key
        vector = node.label
        led = acc.ledger
        res = self.lazy_relink_search(key, start, acc, vector)
        if not res.found or res.successors[0] is not node:
            node.inserted = True
            return False
        level = 1
        while level <= node.top_level:
            # point the node at its successor first; this is still private setup
            while True:
                old = node.next[level]
                if old[1]:
                    node.inserted = True
                    return False
                if node.cas_next(level, old[0], res.successors[level]):
                    break
            pred = res.predecessors[level]
            ok = pred.cas_next(level, res.middle[level], node)
            if led is not None:
                led.cas(pred, ok, self.list_id(pred, level))
            if ok:
                level += 1
                continue
            if restart is not None:
                start = restart()
            res = self.lazy_relink_search(key, start, acc, vector)
            if not res.found or res.successors[0] is not node:
                node.inserted = True
                return False
        node.inserted = True
        return True

    # -- inspection (quiescent use only) -----------------------------------

    def iter_level(self, level: int, label: int = 0, include_dead: bool = False):
        node = self.heads[level][label].next[level][0]
        while node is not self.tail:
            if include_dead or not node.next[0][1]:
                yield node
            node = node.next[level][0]

    def live_keys(self) -> List[int]:
        """Keys of level-0 nodes that are unmarked and valid."""
        return [n.key for n in self.iter_level(0) if n.next[0][2]]
