"""Per-thread navigable index from keys to shared nodes.

The index is strictly single-owner.  It pairs a sorted map (for predecessor
queries and backward walks) with a plain dict used as the fast exact-match
path.  Both containers are updated together on every mutation.
"""

from __future__ import annotations

from typing import Callable, Iterator, Optional

from sortedcontainers import SortedDict

from .node import SharedNode


def usable_as_start(node: SharedNode) -> bool:
    # a node stays usable until retire() has marked its top level too
    return not node.next[0][1] or not node.next[node.top_level][1]


class Cursor:
    """Position in a :class:`LocalIndex`.

    A cursor remembers its key, so stepping backwards still works after the
    entry it sits on has been erased.
    """

    __slots__ = ("index", "key", "node")

    def __init__(self, index: "LocalIndex", key: int, node: SharedNode) -> None:
        self.index = index
        self.key = key
        self.node = node

    def prev(self) -> Optional["Cursor"]:
        return self.index.lower(self.key)

    def __repr__(self) -> str:
        return f"Cursor(key={self.key}, node={self.node!r})"


FinishInsert = Callable[[SharedNode, Optional[Cursor]], bool]


class LocalIndex:
    def __init__(self, owner: int = 0) -> None:
        self.owner = owner
        self.ordered: SortedDict = SortedDict()
        self.hash: dict = {}

    def __len__(self) -> int:
        return len(self.hash)

    def __contains__(self, key: int) -> bool:
        return key in self.hash

    def keys(self) -> Iterator[int]:
        return iter(self.ordered.keys())

    def items(self):
        return self.ordered.items()

    def insert(self, key: int, node: SharedNode) -> None:
        self.ordered[key] = node
        self.hash[key] = node

    def erase(self, key: int) -> None:
        self.ordered.pop(key, None)
        self.hash.pop(key, None)

    def find(self, key: int) -> Optional[SharedNode]:
        return self.hash.get(key)

    def floor(self, key: int) -> Optional[Cursor]:
        """Cursor on the greatest entry with key <= ``key``."""
        od = self.ordered
        i = od.bisect_right(key)
        if i == 0:
            return None
        k = od.keys()[i - 1]
        return Cursor(self, k, od[k])

    def lower(self, key: int) -> Optional[Cursor]:
        """Cursor on the greatest entry with key < ``key``."""
        od = self.ordered
        i = od.bisect_left(key)
        if i == 0:
            return None
        k = od.keys()[i - 1]
        return Cursor(self, k, od[k])

    def update_start(self, cursor: Optional[Cursor]) -> Optional[Cursor]:
        """Walk back from ``cursor`` to the nearest fully inserted, unmarked entry.

        Marked entries met on the way are erased.  Half-inserted entries are
        stepped over but kept.
        """
        while cursor is not None:
            node = cursor.node
            if usable_as_start(node):
                if node.inserted:
                    return cursor
            else:
                self.erase(cursor.key)
            cursor = cursor.prev()
        return None

    def get_start(self, key: int, finish_insert: FinishInsert) -> Optional[Cursor]:
        """Cursor on the closest entry <= ``key`` usable as a search start.

        Half-inserted nodes are completed through ``finish_insert`` (given the
        node and a start cursor for its own search).  A ``None`` result means
        the caller should start from the head sentinel.
        """
        cursor = self.floor(key)
        while cursor is not None:
            node = cursor.node
            if usable_as_start(node):
                if node.inserted:
                    return cursor
                if finish_insert(node, self.update_start(cursor.prev())):
                    return cursor
                self.erase(cursor.key)
            else:
                self.erase(cursor.key)
            cursor = cursor.prev()
        return None
