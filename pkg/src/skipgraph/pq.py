"""Relaxed priority queues over the shared skip graph.

Removal protocols:

* ``spray``: a SPRAY(H, L, D) random walk over the caller's own skip list,
  then an attempt to mark the landing node.
* ``sgmark``: a deterministic top-down walk of the caller's skip list that
  tries to mark the first unmarked node it meets on each level.
* ``spray-control-skiplist``: the spray walk over a single ordinary skip list.

The mark of the bottom-level reference is the commit point of a removal.
"""

from __future__ import annotations

import random
from typing import List, Optional

from .graph import SkipGraph, SkipGraphConfig, max_level_for
from .layered_map import LayeredMap, MapHandle
from .node import KEY_MAX, SharedNode
from .oracle import SprayParams

PROTOCOLS = ("spray", "sgmark", "spray-control-skiplist")


def _is_marked(node: SharedNode) -> bool:
    return node.next[0][1]


class RelaxedPQ:
    """Set-semantics relaxed priority queue with one :class:`PQHandle` per thread.

    ``faux=True`` turns removals into dry runs: the walk is performed and the
    would-be victim recorded, but nothing is marked.  ``record_ranks=True``
    stores, per removal, how many live keys preceded the removed one.
    """

    def __init__(
        self,
        nthreads: int,
        protocol: str = "spray",
        *,
        lazy_levels: bool = False,
        spray_params: Optional[SprayParams] = None,
        faux: bool = False,
        record_ranks: bool = False,
        clean_prob: Optional[float] = None,
        max_level: Optional[int] = None,
        instrument: bool = False,
        track_writers: bool = False,
        vectors=None,
        seed: int = 0,
    ) -> None:
        if protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        variant = "control-skip-list" if protocol == "spray-control-skiplist" else "dense"
        if max_level is None:
            max_level = max_level_for(nthreads)
        config = SkipGraphConfig(max_level, variant, commission_period_ns=0)
        self.protocol = protocol
        self.nthreads = nthreads
        self.map = LayeredMap(
            config,
            nthreads,
            vectors=vectors,
            mode="lazy" if lazy_levels else "nonlazy",
            instrument=instrument,
            track_writers=track_writers,
            seed=seed,
        )
        self.graph: SkipGraph = self.map.graph
        if spray_params is None:
            spray_params = SprayParams.default(nthreads)
        if spray_params.H > self.graph.max_level:
            spray_params = SprayParams(self.graph.max_level, spray_params.L, spray_params.D)
        self.spray_params = spray_params
        self.faux = faux
        self.record_ranks = record_ranks
        self.clean_prob = 1.0 / nthreads if clean_prob is None else clean_prob
        self.handles: List[PQHandle] = [PQHandle(self, h) for h in self.map.handles]

    def handle(self, tid: int) -> "PQHandle":
        return self.handles[tid]

    def live_keys(self) -> List[int]:
        return self.map.live_keys()


class PQHandle:
    """One thread's view of a :class:`RelaxedPQ`."""

    def __init__(self, pq: RelaxedPQ, mh: MapHandle) -> None:
        self.pq = pq
        self.mh = mh
        self.graph = pq.graph
        self.tid = mh.tid
        self.vector = mh.vector
        self.rng: random.Random = mh.rng
        self.ledger = mh.ledger
        self.ranks: List[int] = []
        self.faux_victims: List[int] = []

    # -- insertion ------------------------------------------------------------

    def insert(self, key: int) -> bool:
        return self.mh.insert(key)

    # -- helpers --------------------------------------------------------------

    def _read(self, node: SharedNode) -> None:
        if self.ledger is not None:
            self.ledger.read(node)

    def _next_unmarked(self, prev: SharedNode, level: int) -> SharedNode:
        """First level-0-unmarked node after ``prev`` on its level list (or the tail)."""
        cur = prev.next[level][0]
        while cur.key != KEY_MAX:
            self._read(cur)
            if not _is_marked(cur):
                break
            cur = cur.next[level][0]
        return cur

    def rank_of(self, node: SharedNode) -> int:
        """Live keys smaller than ``node``'s, counted along the bottom list."""
        rank = 0
        cur = self.graph.heads[0][0].next[0][0]
        while cur.key < node.key:
            if not _is_marked(cur) and cur.next[0][2]:
                rank += 1
            cur = cur.next[0][0]
        return rank

    def _try_mark(self, node: SharedNode) -> bool:
        if self.pq.faux:
            if _is_marked(node):
                return False
            self.faux_victims.append(node.key)
            if self.pq.record_ranks:
                self.ranks.append(self.rank_of(node))
            return True
        rank = self.rank_of(node) if self.pq.record_ranks else None
        ok = node.cas_mark_valid(0, (False, True), (True, False))
        if self.ledger is not None:
            self.ledger.cas(node, ok, self.graph.list_id(node, 0))
        if not ok:
            return False
        self.graph.mark_upper_levels(node, self.mh)
        self.mh._forget(node)
        if rank is not None:
            self.ranks.append(rank)
        return True

    def _maybe_clean(self) -> None:
        if not self.pq.faux and self.rng.random() < self.pq.clean_prob:
            self.clean_prefix()

    def _observed_empty(self) -> bool:
        return self._next_unmarked(self.graph.heads[0][0], 0).key == KEY_MAX

    # -- removal ----------------------------------------------------------------

    def remove_min(self) -> Optional[int]:
        if self.pq.protocol == "sgmark":
            return self.remove_min_sgmark()
        return self.remove_min_spray()

    def spray_walk(self) -> Optional[SharedNode]:
        """Landing node of one spray, or None if the bottom list looked empty."""
        g = self.graph
        params = self.pq.spray_params
        pos: Optional[SharedNode] = None
        for level in params.levels():
            if pos is None:
                first = self._next_unmarked(g.head(level, self.vector), level)
                if first.key == KEY_MAX:
                    continue
                pos = first
            for _ in range(self.rng.randint(0, params.L)):
                nxt = self._next_unmarked(pos, level)
                if nxt.key == KEY_MAX:
                    break
                pos = nxt
        return pos

    def remove_min_spray(self) -> Optional[int]:
        self._maybe_clean()
        while True:
            node = self.spray_walk()
            if node is None:
                return None
            if self._try_mark(node):
                return node.key
            if self._observed_empty():
                return None

    def remove_min_sgmark(self) -> Optional[int]:
        self._maybe_clean()
        g = self.graph
        while True:
            level = g.max_level
            prev = g.head(level, self.vector)
            while level > 0:
                node = self._next_unmarked(prev, level)
                if node.key != KEY_MAX:
                    if self._try_mark(node):
                        return node.key
                    prev = node
                level -= 1
                if prev.is_head:
                    prev = g.head(level, self.vector)
            for _ in range(2):
                node = self._next_unmarked(prev, 0)
                if node.key == KEY_MAX:
                    return None
                if self._try_mark(node):
                    return node.key
                prev = node

    # -- cleaning -----------------------------------------------------------------

    def _clean_list(self, head: SharedNode, level: int) -> int:
        first = head.next[level]
        if first[1]:
            return 0
        cur = first[0]
        count = 0
        # only nodes frozen at this level may be unlinked
        while cur.key != KEY_MAX and cur.next[level][1]:
            cur = cur.next[level][0]
            count += 1
        if count == 0:
            return 0
        ok = head.cas_next(level, first[0], cur)
        if self.ledger is not None:
            self.ledger.cas(head, ok, self.graph.list_id(head, level))
        return count if ok else 0

    def clean_prefix(self) -> int:
        """Unlink the marked prefix of the bottom list with one compare-and-swap.

        The caller's own upper-level lists get the same treatment, and the
        marked prefix of its local index is erased.  Returns the number of
        bottom-level nodes unlinked.
        """
        g = self.graph
        n = self._clean_list(g.heads[0][0], 0)
        for level in range(1, g.max_level + 1):
            self._clean_list(g.head(level, self.vector), level)
        index = self.mh.index
        while len(index):
            key, node = index.ordered.peekitem(0)
            if not _is_marked(node):
                break
            index.erase(key)
        return n


# -- perfect layouts for distribution checks -------------------------------------


def _trailing_zeros(p: int, cap: int) -> int:
    if p == 0:
        return cap
    return min(cap, (p & -p).bit_length() - 1)


def load_perfect(pq: RelaxedPQ, length: int, first_key: int = 1) -> List[SharedNode]:
    """Fill an empty queue with a perfect layout of ``length`` nodes (quiescent only).

    Position ``p`` gets key ``first_key + p``.  On a skip graph it joins level
    ``i`` list ``p mod 2**i``; on the control skip list it reaches level
    ``trailing_zeros(p)``.
    """
    g = pq.graph
    ml = g.max_level
    if g.live_keys():
        raise ValueError("load_perfect needs an empty queue")
    nodes = []
    for p in range(length):
        if g.partitioned:
            top, label = ml, p % (1 << ml)
        else:
            top, label = _trailing_zeros(p, ml), 0
        node = SharedNode(
            first_key + p, max_level=ml, top_level=top,
            owner=p % pq.nthreads, label=label,
        )
        node.inserted = True
        nodes.append(node)
    for level in range(ml + 1):
        tails = {}
        for node in nodes:
            if node.top_level < level:
                continue
            lab = g.list_label(node.label, level)
            prev = tails.get(lab, g.heads[level][lab])
            prev.next[level] = (node, False, True)
            node.next[level] = (g.tail, False, True)
            tails[lab] = node
    return nodes
