"""Donation of local-index entries between threads for unbalanced workloads.

A background coordinator reads how many elements each worker inserted during
the previous round and publishes, per worker, the fraction of its new
insertions it should give away.  Workers donate continuously at the published
rate, and the coordinator deals the donated entries round-robin to the other
workers.  Only index entries move; the shared structure is never touched.
"""

from __future__ import annotations

import collections
import logging
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Deque, List, Optional, Sequence, Tuple

from .node import SharedNode

log = logging.getLogger(__name__)

QUEUE_CAPACITY = 1024
ROUND_PERIOD_S = 0.010
FRACTION_MODES = ("literal", "max0")

Entry = Tuple[int, SharedNode]


class SPSCQueue:
    """Bounded single-producer single-consumer FIFO.

    ``deque.append`` and ``deque.popleft`` are atomic, and only the producer
    grows the queue, so the capacity check cannot be invalidated in between.
    """

    def __init__(self, capacity: int = QUEUE_CAPACITY) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q: Deque[Entry] = collections.deque()

    def push(self, item: Entry) -> bool:
        if len(self._q) >= self.capacity:
            return False
        self._q.append(item)
        return True

    def pop(self) -> Optional[Entry]:
        try:
            return self._q.popleft()
        except IndexError:
            return None

    def drain(self) -> List[Entry]:
        out = []
        while True:
            item = self.pop()
            if item is None:
                return out
            out.append(item)

    def __len__(self) -> int:
        return len(self._q)

    @property
    def free(self) -> int:
        return self.capacity - len(self._q)


class InsertionCensus:
    """Cumulative per-thread insertion counts, as last announced."""

    def __init__(self, nthreads: int) -> None:
        self.counts = [0] * nthreads

    def announce(self, tid: int, count: int) -> None:
        self.counts[tid] = count

    @property
    def total(self) -> int:
        return sum(self.counts)

    def snapshot(self) -> List[int]:
        return list(self.counts)


def compute_donation_fraction(i_i: int, i_t: int, nthreads: int, mode: str = "literal") -> Fraction:
    """Share of its recent insertions a worker should give away.

    ``literal`` returns ``I_i/I_T`` when ``1/T > I_i/I_T - 1/T`` and the
    excess ``I_i/I_T - 1/T`` otherwise; ``max0`` always returns the excess,
    floored at zero.
    """
    if mode not in FRACTION_MODES:
        raise ValueError(f"mode must be one of {FRACTION_MODES}")
    if i_t <= 0:
        raise ValueError("total insertion count must be positive")
    if not 0 <= i_i <= i_t:
        raise ValueError("need 0 <= I_i <= I_T")
    if nthreads < 2:
        raise ValueError("donation needs at least two threads")
    share = Fraction(i_i, i_t)
    fair = Fraction(1, nthreads)
    excess = share - fair
    if mode == "max0":
        return max(Fraction(0), excess)
    return share if fair > excess else excess


@dataclass
class BalancerStats:
    rounds: int = 0
    donated: int = 0
    absorbed: int = 0
    dropped: int = 0
    delivered: int = 0


class LoadBalancer:
    """Coordinator plus per-worker donation and absorption.

    Workers call :meth:`worker_tick` between operations; the coordinator runs
    in its own thread between :meth:`start` and :meth:`stop`.
    """

    def __init__(
        self,
        handles: Sequence,
        *,
        period_s: float = ROUND_PERIOD_S,
        capacity: int = QUEUE_CAPACITY,
        mode: str = "literal",
    ) -> None:
        if mode not in FRACTION_MODES:
            raise ValueError(f"mode must be one of {FRACTION_MODES}")
        self.handles = list(handles)
        self.nthreads = len(self.handles)
        self.period_s = period_s
        self.mode = mode
        self.census = InsertionCensus(self.nthreads)
        self.outbound = [SPSCQueue(capacity) for _ in range(self.nthreads)]
        self.inbound = [SPSCQueue(capacity) for _ in range(self.nthreads)]
        self.requested = [Fraction(0)] * self.nthreads
        self._last_counts = [0] * self.nthreads
        self._credit = [Fraction(0)] * self.nthreads
        self._backlog: List[Tuple[int, Entry]] = []
        self._cursor = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        # per-worker counters are written only by their worker
        self.donated = [0] * self.nthreads
        self.absorbed = [0] * self.nthreads
        self.dropped = [0] * self.nthreads
        self.delivered = 0
        self.rounds = 0

    # -- coordinator ---------------------------------------------------------

    def coordinator_round(self) -> None:
        counts = self.census.snapshot()
        deltas = [c - p for c, p in zip(counts, self._last_counts)]
        self._last_counts = counts
        total = sum(deltas)
        # a round without insertions keeps the previous request
        if total > 0 and self.nthreads >= 2:
            for tid, c in enumerate(deltas):
                self.requested[tid] = compute_donation_fraction(c, total, self.nthreads, self.mode)
        pending = self._backlog
        self._backlog = []
        for src, q in enumerate(self.outbound):
            pending.extend((src, e) for e in q.drain())
        for src, entry in pending:
            if not self._deliver(src, entry):
                self._backlog.append((src, entry))
        self.rounds += 1

    def _deliver(self, src: int, entry: Entry) -> bool:
        n = self.nthreads
        for _ in range(n):
            dst = self._cursor
            self._cursor = (self._cursor + 1) % n
            if dst == src:
                continue
            if self.inbound[dst].push(entry):
                self.delivered += 1
                return True
        return False

    def _run(self) -> None:
        while not self._stop.wait(self.period_s):
            self.coordinator_round()

    def start(self) -> None:
        if self._thread is not None:
            raise RuntimeError("coordinator already running")
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="donation-coordinator", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is None:
            return
        self._stop.set()
        self._thread.join()
        self._thread = None

    @property
    def in_flight(self) -> int:
        return (
            sum(len(q) for q in self.outbound)
            + sum(len(q) for q in self.inbound)
            + len(self._backlog)
        )

    def stats(self) -> BalancerStats:
        return BalancerStats(
            self.rounds, sum(self.donated), sum(self.absorbed), sum(self.dropped), self.delivered
        )

    # -- workers ---------------------------------------------------------------

    def worker_donate(self, handle) -> int:
        """Give away the requested share of entries indexed since the last call.

        Each new entry earns ``fraction`` of credit; every whole unit of
        credit sends one entry, oldest first, to the outbound queue.
        """
        tid = handle.tid
        recent = handle.recent
        if not recent:
            return 0
        handle.recent = []
        credit = self._credit[tid] + self.requested[tid] * len(recent)
        out = self.outbound[tid]
        index = handle.index
        moved = 0
        for key in recent:
            if credit < 1 or out.free == 0:
                break
            node = index.find(key)
            if node is None:
                continue
            index.erase(key)
            if node.next[0][1]:
                continue
            out.push((key, node))
            moved += 1
            credit -= 1
        # unspent credit carries over, but never more than one entry's worth
        self._credit[tid] = min(credit, Fraction(1))
        self.donated[tid] += moved
        return moved

    def worker_absorb(self, handle) -> int:
        """Index every incoming entry whose node is not marked."""
        tid = handle.tid
        graph = handle.graph
        index = handle.index
        got = 0
        for key, node in self.inbound[tid].drain():
            if node.next[0][1]:
                self.dropped[tid] += 1
                continue
            if not node.inserted and graph.partitioned and not _upper_linked(node):
                # never linked above level 0: build its upper levels in our lists
                node.label = handle.vector
            index.insert(key, node)
            got += 1
        self.absorbed[tid] += got
        return got

    def worker_tick(self, handle) -> None:
        tid = handle.tid
        self.worker_absorb(handle)
        self.census.announce(tid, handle.indexed)
        self.worker_donate(handle)

    def final_absorb(self) -> None:
        """Flush everything in flight into the workers' indexes (quiescent only)."""
        self.coordinator_round()
        for h in self.handles:
            self.worker_absorb(h)


def _upper_linked(node: SharedNode) -> bool:
    return any(node.next[level][0] is not None for level in range(1, node.top_level + 1))
