"""Linearizable map built from per-thread local indexes over a shared skip graph."""

from __future__ import annotations

import random
from typing import List, Optional, Sequence, Tuple

from .graph import SkipGraph, SkipGraphConfig
from .local_index import Cursor, LocalIndex
from .metrics import MetricsLedger
from .node import SharedNode, check_user_key

MODES = ("lazy", "nonlazy")


class LayeredMap:
    """A shared skip graph plus one :class:`MapHandle` per thread.

    ``vectors[t]`` is thread ``t``'s membership vector (as an int whose low
    ``i`` bits name its level-``i`` list).  With ``use_index=False`` every
    operation starts from the head sentinel, which is how the plain
    skip-list control is run.
    """

    def __init__(
        self,
        config: SkipGraphConfig,
        nthreads: int,
        *,
        vectors: Optional[Sequence[int]] = None,
        mode: str = "lazy",
        use_index: bool = True,
        instrument: bool = False,
        track_writers: bool = False,
        seed: int = 0,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.config = config
        self.graph = SkipGraph(config)
        self.nthreads = nthreads
        self.mode = mode
        self.lazy = mode == "lazy"
        self.use_index = use_index
        if vectors is None:
            from .topology import Topology, generate_membership_vectors

            vectors = [
                mv.value
                for mv in generate_membership_vectors(
                    Topology.flat(nthreads), nthreads, config.max_level
                )
            ] if config.partitioned else [0] * nthreads
        if len(vectors) != nthreads:
            raise ValueError("need one membership vector per thread")
        self.vectors = list(vectors)
        seeder = random.Random(seed)
        self.handles: List[MapHandle] = [
            MapHandle(
                self,
                tid,
                self.vectors[tid],
                MetricsLedger(tid, nthreads, track_writers) if instrument else None,
                random.Random(seeder.getrandbits(64)),
            )
            for tid in range(nthreads)
        ]

    def handle(self, tid: int) -> "MapHandle":
        return self.handles[tid]

    def live_keys(self) -> List[int]:
        return self.graph.live_keys()


class MapHandle:
    """One thread's view of a :class:`LayeredMap`; must only be used by that thread."""

    def __init__(
        self,
        owner: LayeredMap,
        tid: int,
        vector: int,
        ledger: Optional[MetricsLedger],
        rng: random.Random,
    ) -> None:
        self.map = owner
        self.graph: SkipGraph = owner.graph
        self.tid = tid
        self.vector = vector
        self.ledger = ledger
        self.rng = rng
        self.index = LocalIndex(tid)
        self.lazy = owner.lazy
        self.use_index = owner.use_index
        # keys this thread indexed since its last donation, oldest first
        self.recent: List[int] = []
        self.indexed = 0

    # -- local-index plumbing ---------------------------------------------

    def _forget(self, node: SharedNode) -> None:
        if self.index.find(node.key) is node:
            self.index.erase(node.key)

    def _finish(self, node: SharedNode, cursor: Optional[Cursor]) -> bool:
        holder = [cursor]

        def restart() -> Optional[SharedNode]:
            holder[0] = self.index.update_start(holder[0])
            return holder[0].node if holder[0] is not None else None

        start = cursor.node if cursor is not None else None
        return self.graph.finish_insert(node, start, self, restart)

    def get_start(self, key: int) -> Optional[Cursor]:
        if not self.use_index:
            return None
        return self.index.get_start(key, self._finish)

    def _indexable(self, node: SharedNode) -> bool:
        return self.use_index and node.top_level == self.graph.max_level

    def _record(self, node: SharedNode) -> None:
        if self._indexable(node):
            self.index.insert(node.key, node)
            self.recent.append(node.key)
            self.indexed += 1

    # -- insert -------------------------------------------------------------

    def _insert_helper(self, node: SharedNode) -> Optional[bool]:
        """Settle an insert against an existing node, or None if it is marked."""
        while True:
            marked, valid = node.get_mark_valid(0)
            if marked:
                self._forget(node)
                return None
            if valid:
                return False
            if self.lazy and node.cas_mark_valid(0, (False, False), (False, True)):
                return True

    def _lazy_insert(self, key: int, value: object) -> Tuple[bool, Optional[SharedNode]]:
        graph = self.graph
        cursor = self.get_start(key)
        start = cursor.node if cursor is not None else None
        node = None
        while True:
            res = graph.lazy_relink_search(key, start, self)
            if res.found:
                r = self._insert_helper(res.successors[0])
                if r is not None:
                    return r, None
                continue
            if node is None:
                node = graph.new_node(key, value, self)
            node.set_next(0, res.successors[0])
            if graph.link_level0(res.predecessors[0], res.middle[0], node, self):
                return True, node
            if cursor is not None:
                cursor = self.index.update_start(cursor)
                start = cursor.node if cursor is not None else None

    def insert(self, key: int, value: object = None) -> bool:
        check_user_key(key)
        if self.ledger is not None:
            self.ledger.ops += 1
        if self.use_index:
            node = self.index.find(key)
            if node is not None:
                r = self._insert_helper(node)
                if r is not None:
                    return r
        ok, node = self._lazy_insert(key, value)
        if node is not None:
            if self.lazy:
                if node.top_level == 0:
                    node.inserted = True
                self._record(node)
            elif self._finish(node, self.get_start(key - 1)):
                self._record(node)
        return ok

    # -- remove -------------------------------------------------------------

    def _remove_helper(self, node: SharedNode) -> Optional[bool]:
        while True:
            marked, valid = node.get_mark_valid(0)
            if marked:
                self._forget(node)
                return None
            if self.lazy:
                if not valid:
                    return False
                if node.cas_mark_valid(0, (False, True), (False, False)):
                    return True
            else:
                ok = node.cas_mark_valid(0, (False, True), (True, False))
                if self.ledger is not None:
                    self.ledger.cas(node, ok, self.graph.list_id(node, 0))
                if ok:
                    self.graph.mark_upper_levels(node, self)
                    return True

    def remove(self, key: int) -> bool:
        check_user_key(key)
        if self.ledger is not None:
            self.ledger.ops += 1
        if self.use_index:
            node = self.index.find(key)
            if node is not None:
                r = self._remove_helper(node)
                if r is not None:
                    return r
        cursor = self.get_start(key)
        start = cursor.node if cursor is not None else None
        while True:
            found = self.graph.retire_search(key, start, self)
            if found is None:
                return False
            r = self._remove_helper(found)
            if r is not None:
                return r

    # -- contains / get -------------------------------------------------------

    def _lookup(self, key: int) -> Optional[SharedNode]:
        if self.use_index:
            node = self.index.find(key)
            if node is not None:
                _, marked, valid = node.next[0]
                if not marked:
                    return node if valid else None
                self._forget(node)
        cursor = self.get_start(key)
        found = self.graph.retire_search(key, cursor.node if cursor is not None else None, self)
        if found is None:
            return None
        _, marked, valid = found.next[0]
        return found if (not marked and valid) else None

    def contains(self, key: int) -> bool:
        check_user_key(key)
        if self.ledger is not None:
            self.ledger.ops += 1
        return self._lookup(key) is not None

    def get(self, key: int, default: object = None) -> object:
        check_user_key(key)
        if self.ledger is not None:
            self.ledger.ops += 1
        node = self._lookup(key)
        return default if node is None else node.value

    # -- inspection -----------------------------------------------------------

    def live_index_size(self) -> int:
        """Index entries whose node is currently unmarked."""
        return sum(1 for n in self.index.hash.values() if not n.next[0][1])
