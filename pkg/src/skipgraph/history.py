"""Concurrent history recording and a linearizability checker for the set ADT.

The checker is a Wing-Gong style backtracking search with memoisation on
(linearized-set, abstract state).  Operations on different keys commute and
the set is a product of one boolean per key, so by locality each key is
checked on its own.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

OPS = ("insert", "remove", "contains")
DEFAULT_LIMIT = 90


class HistoryTooLarge(ValueError):
    pass


@dataclass
class Record:
    tid: int
    op: str
    key: int
    inv: int
    result: Optional[bool] = None
    resp: Optional[int] = None

    @property
    def complete(self) -> bool:
        return self.resp is not None


class History:
    """Thread-safe recorder; every invocation and response draws from one global counter."""

    def __init__(self) -> None:
        self._clock = itertools.count()
        self._lock = threading.Lock()
        self.records: List[Record] = []

    def _tick(self) -> int:
        with self._lock:
            return next(self._clock)

    def invoke(self, tid: int, op: str, key: int) -> Record:
        if op not in OPS:
            raise ValueError(f"unknown operation {op!r}")
        rec = Record(tid, op, key, self._tick())
        with self._lock:
            self.records.append(rec)
        return rec

    def respond(self, rec: Record, result: bool) -> None:
        rec.result = bool(result)
        rec.resp = self._tick()

    def call(self, tid: int, op: str, key: int, fn) -> bool:
        rec = self.invoke(tid, op, key)
        out = fn(key)
        self.respond(rec, out)
        return out

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def from_tuples(cls, rows: Iterable[Tuple[int, str, int, bool, int, int]]) -> "History":
        """Build from ``(tid, op, key, result, inv, resp)`` rows."""
        h = cls()
        for tid, op, key, result, inv, resp in rows:
            if op not in OPS:
                raise ValueError(f"unknown operation {op!r}")
            if resp <= inv:
                raise ValueError("response must follow invocation")
            h.records.append(Record(tid, op, key, inv, bool(result), resp))
        return h


@dataclass
class Verdict:
    ok: bool
    violation: List[Record] = field(default_factory=list)
    key: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


def _apply(op: str, present: bool) -> Tuple[bool, bool]:
    """(result, new state) of ``op`` on a key whose presence is ``present``."""
    if op == "insert":
        return (not present), True
    if op == "remove":
        return present, False
    return present, present


def _key_linearizable(ops: Sequence[Record], present: bool, cut: Optional[int] = None) -> bool:
    """Whether one key's operations admit a witness.

    With ``cut`` set, only operations that responded by ``cut`` must be
    linearized; those still pending at ``cut`` may be, with their eventual
    result, or may be left out.
    """
    n = len(ops)
    inf = float("inf")
    resp = [r.resp if cut is None or r.resp <= cut else inf for r in ops]
    required = sum(1 << i for i in range(n) if resp[i] != inf)
    if required == 0:
        return True
    seen = set()
    stack = [(0, present)]
    while stack:
        done, state = stack.pop()
        if done & required == required:
            return True
        if (done, state) in seen:
            continue
        seen.add((done, state))
        horizon = min(resp[i] for i in range(n) if not done >> i & 1)
        for i in range(n):
            if done >> i & 1 or ops[i].inv > horizon:
                continue
            result, nxt = _apply(ops[i].op, state)
            if result == ops[i].result:
                stack.append((done | 1 << i, nxt))
    return False


def _split(records: Sequence[Record]) -> Dict[int, List[Record]]:
    per: Dict[int, List[Record]] = {}
    for r in records:
        per.setdefault(r.key, []).append(r)
    return per


def _first_bad_key(records: Sequence[Record], initial: FrozenSet[int], cut: Optional[int] = None) -> Optional[int]:
    for key, ops in sorted(_split(records).items()):
        if cut is not None:
            ops = [r for r in ops if r.inv < cut]
        if not _key_linearizable(ops, key in initial, cut):
            return key
    return None


def check_linearizability(
    history: History,
    initial: Iterable[int] = (),
    limit: int = DEFAULT_LIMIT,
) -> Verdict:
    """Search for a sequential set witness.

    Operations that never responded are ignored.  On failure the verdict
    carries the completed operations of the shortest non-linearizable
    prefix, in response order.
    """
    records = [r for r in history.records if r.complete]
    if len(records) > limit:
        raise HistoryTooLarge(f"history has {len(records)} operations; limit is {limit}")
    init = frozenset(initial)
    if _first_bad_key(records, init) is None:
        return Verdict(True)
    cuts = sorted(r.resp for r in records)
    lo, hi = 0, len(cuts) - 1
    # non-linearizability survives extension, so bisect on the cut point
    while lo < hi:
        mid = (lo + hi) // 2
        if _first_bad_key(records, init, cuts[mid]) is None:
            lo = mid + 1
        else:
            hi = mid
    cut = cuts[lo]
    prefix = sorted((r for r in records if r.resp <= cut), key=lambda r: r.resp)
    return Verdict(False, prefix, _first_bad_key(records, init, cut))
