"""Per-thread access counters and the accessor x owner locality matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Set, Tuple

ListId = Tuple[int, int]  # (level, list label)


class MetricsLedger:
    """Counters owned by a single worker thread.

    Reads and maintenance compare-and-swaps are bucketed by the owner of the
    node they touch.  Work a thread does on a node it is still constructing is
    never reported here.
    """

    __slots__ = (
        "tid",
        "read_row",
        "cas_row",
        "cas_success",
        "cas_fail",
        "ops",
        "effective_updates",
        "writers",
        "track_writers",
    )

    def __init__(self, tid: int, nthreads: int, track_writers: bool = False) -> None:
        self.tid = tid
        self.read_row = [0] * nthreads
        self.cas_row = [0] * nthreads
        self.cas_success = 0
        self.cas_fail = 0
        self.ops = 0
        self.effective_updates = 0
        self.writers: Set[ListId] = set()
        self.track_writers = track_writers

    def reset(self) -> None:
        n = len(self.read_row)
        self.read_row = [0] * n
        self.cas_row = [0] * n
        self.cas_success = self.cas_fail = self.ops = self.effective_updates = 0
        self.writers = set()

    def read(self, node) -> None:
        self.read_row[node.owner] += 1

    def cas(self, node, ok: bool, list_id: ListId) -> None:
        self.cas_row[node.owner] += 1
        if ok:
            self.cas_success += 1
        else:
            self.cas_fail += 1
        if self.track_writers:
            self.writers.add(list_id)

    @property
    def local_reads(self) -> int:
        return self.read_row[self.tid]

    @property
    def remote_reads(self) -> int:
        return sum(self.read_row) - self.read_row[self.tid]

    @property
    def local_maint_cas(self) -> int:
        return self.cas_row[self.tid]

    @property
    def remote_maint_cas(self) -> int:
        return sum(self.cas_row) - self.cas_row[self.tid]


@dataclass
class LedgerSummary:
    nthreads: int
    read_matrix: List[List[int]]
    cas_matrix: List[List[int]]
    per_thread: List[Dict[str, int]]
    ops: int
    effective_updates: int
    cas_success: int
    cas_fail: int
    writers: Dict[ListId, Set[int]] = field(default_factory=dict)

    @property
    def cas_success_rate(self) -> float:
        total = self.cas_success + self.cas_fail
        return self.cas_success / total if total else 1.0

    def band_fraction(self, width: int = 1, matrix: str = "cas") -> float:
        """Share of matrix mass with ``|accessor - owner| <= width``."""
        m = self.cas_matrix if matrix == "cas" else self.read_matrix
        total = sum(map(sum, m))
        if total == 0:
            return 0.0
        band = sum(
            m[i][j]
            for i in range(self.nthreads)
            for j in range(self.nthreads)
            if abs(i - j) <= width
        )
        return band / total

    def to_dict(self) -> dict:
        return {
            "nthreads": self.nthreads,
            "ops": self.ops,
            "effective_updates": self.effective_updates,
            "cas_success": self.cas_success,
            "cas_fail": self.cas_fail,
            "cas_success_rate": self.cas_success_rate,
            "per_thread": self.per_thread,
            "read_matrix": self.read_matrix,
            "cas_matrix": self.cas_matrix,
        }


def merge_ledgers(ledgers: List[MetricsLedger]) -> LedgerSummary:
    """Combine per-thread ledgers after the workers are quiescent."""
    n = len(ledgers)
    writers: Dict[ListId, Set[int]] = {}
    per_thread = []
    for led in ledgers:
        per_thread.append(
            {
                "thread": led.tid,
                "local_reads": led.local_reads,
                "remote_reads": led.remote_reads,
                "local_maint_cas": led.local_maint_cas,
                "remote_maint_cas": led.remote_maint_cas,
                "cas_success": led.cas_success,
                "cas_fail": led.cas_fail,
                "ops": led.ops,
                "effective_updates": led.effective_updates,
            }
        )
        for lid in led.writers:
            writers.setdefault(lid, set()).add(led.tid)
    return LedgerSummary(
        nthreads=n,
        read_matrix=[list(led.read_row) for led in ledgers],
        cas_matrix=[list(led.cas_row) for led in ledgers],
        per_thread=per_thread,
        ops=sum(led.ops for led in ledgers),
        effective_updates=sum(led.effective_updates for led in ledgers),
        cas_success=sum(led.cas_success for led in ledgers),
        cas_fail=sum(led.cas_fail for led in ledgers),
        writers=writers,
    )
