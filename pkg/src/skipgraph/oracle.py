"""Exact models of perfect skip graphs and skip lists.

Everything here is deterministic and uses :class:`fractions.Fraction`, except
the coupon-collector estimate, which is Monte Carlo by nature.

Positions are bottom-list indices starting at 0.  In a perfect skip graph the
level-``i`` list ``j`` holds the positions congruent to ``j`` modulo ``2**i``;
in a perfect skip list level ``i`` holds the multiples of ``2**i``.
"""

from __future__ import annotations

import bisect
import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

KINDS = ("skipgraph", "skiplist")


@dataclass(frozen=True)
class SprayParams:
    H: int
    L: int
    D: int = 1

    def __post_init__(self) -> None:
        if self.H < 0 or self.L < 0 or self.D < 1:
            raise ValueError(f"invalid spray parameters {self}")

    def levels(self) -> List[int]:
        """Levels on which the walk moves forward, top first."""
        out = list(range(self.H, -1, -self.D))
        if out[-1] != 0:
            out.append(0)
        return out

    @classmethod
    def default(cls, nthreads: int) -> "SprayParams":
        logt = max(1, (nthreads - 1).bit_length())
        return cls(logt - 1, logt, 1)


@dataclass(frozen=True)
class PerfectStructure:
    kind: str
    n: int
    length: int
    minimal: bool
    lists: Tuple[Tuple[Tuple[int, ...], ...], ...]

    @property
    def T(self) -> int:
        return 1 << self.n

    @property
    def levels(self) -> int:
        return self.n

    def heads(self, level: int) -> List[int]:
        return [lst[0] for lst in self.lists[level] if lst]

    def list_index(self, level: int, pos: int) -> int:
        return pos % (1 << level) if self.kind == "skipgraph" else 0

    def members(self, level: int, pos: int) -> Tuple[int, ...]:
        return self.lists[level][self.list_index(level, pos)]

    def step(self, level: int, pos: int, count: int) -> int:
        """Walk ``count`` nodes right along ``pos``'s level list, stopping at its end."""
        stride = 1 << level
        last = self.members(level, pos)[-1]
        return min(pos + count * stride, last)

    def restrict(self, m: int, offset: int = 0) -> "PerfectStructure":
        """Levels ``0..m-1`` over the ``2**m`` bottom positions starting at ``offset``,
        re-based to position 0."""
        size = 1 << m
        lists = []
        for level in range(m):
            row = []
            for lst in self.lists[level]:
                seg = tuple(p - offset for p in lst if offset <= p < offset + size)
                if seg:
                    row.append(seg)
            row.sort(key=lambda s: s[0])
            lists.append(tuple(row))
        return PerfectStructure(self.kind, m, size, True, tuple(lists))

    def contains(self, other: "PerfectStructure") -> bool:
        if other.kind != self.kind or other.n > self.n:
            return False
        return self.restrict(other.n).lists == other.lists


def build_perfect(kind: str, n: int, minimal: bool = True, length: Optional[int] = None) -> PerfectStructure:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    T = 1 << n
    if length is None:
        length = T if minimal else T // 2 + T * n + T
    if length < T:
        raise ValueError("a perfect structure needs at least T bottom nodes")
    lists = []
    for level in range(n):
        stride = 1 << level
        if kind == "skipgraph":
            row = tuple(tuple(range(j, length, stride)) for j in range(stride))
        else:
            row = (tuple(range(0, length, stride)),)
        lists.append(row)
    return PerfectStructure(kind, n, length, length == T, tuple(lists))


# -- spray distributions --------------------------------------------------------


@dataclass
class SprayDistribution:
    probs: Dict[int, Fraction]
    start_list: int = 0

    @property
    def total(self) -> Fraction:
        return sum(self.probs.values(), Fraction(0))

    @property
    def support(self) -> List[int]:
        return sorted(p for p, q in self.probs.items() if q)

    def max_prob(self) -> Fraction:
        return max(self.probs.values())

    def __getitem__(self, pos: int) -> Fraction:
        return self.probs.get(pos, Fraction(0))


def _start_position(structure: PerfectStructure, params: SprayParams, start_list: int) -> int:
    if params.H >= structure.levels:
        raise ValueError(f"start height {params.H} exceeds top level {structure.levels - 1}")
    if structure.kind == "skiplist":
        if start_list != 0:
            raise ValueError("a skip list has a single start list")
        return 0
    if not 0 <= start_list < (1 << params.H):
        raise ValueError(f"start list {start_list} does not exist at level {params.H}")
    return start_list


def enumerate_spray(
    structure: PerfectStructure, params: SprayParams, start_list: int = 0
) -> SprayDistribution:
    """Exact landing distribution of SPRAY(H, L, D) started at list ``start_list``."""
    pos0 = _start_position(structure, params, start_list)
    weight = Fraction(1, params.L + 1)
    dist: Dict[int, Fraction] = {pos0: Fraction(1)}
    for level in params.levels():
        nxt: Dict[int, Fraction] = {}
        for pos, p in dist.items():
            for a in range(params.L + 1):
                q = structure.step(level, pos, a)
                nxt[q] = nxt.get(q, Fraction(0)) + p * weight
        dist = nxt
    return SprayDistribution(dist, start_list)


def spray_paths(structure: PerfectStructure, params: SprayParams, start_list: int = 0):
    """Yield ``(step tuple, landing position)`` for every forward-step choice."""
    pos0 = _start_position(structure, params, start_list)
    levels = params.levels()
    for steps in itertools.product(range(params.L + 1), repeat=len(levels)):
        pos = pos0
        for level, a in zip(levels, steps):
            pos = structure.step(level, pos, a)
        yield steps, pos


def start_lists(structure: PerfectStructure, params: SprayParams) -> range:
    return range(1 << params.H) if structure.kind == "skipgraph" else range(1)


def max_spray_reach(structure: PerfectStructure, params: SprayParams) -> int:
    """Furthest landing position over every start list and every path."""
    return max(
        pos
        for j in start_lists(structure, params)
        for _, pos in spray_paths(structure, params, j)
    )


def spray_reach_bound(T: int) -> int:
    """Closed-form reach of SPRAY(log T - 1, log T, 1) on a perfect skip graph."""
    logt = T.bit_length() - 1
    return T // 2 + logt * (T - 1) - 1


# -- SGMARK synchronous rounds ---------------------------------------------------


@dataclass
class RoundTrace:
    mark_order: List[int] = field(default_factory=list)
    attempts: Dict[int, int] = field(default_factory=dict)
    rounds: List[List[int]] = field(default_factory=list)
    restarts: int = 0

    @property
    def attempts_in_mark_order(self) -> List[int]:
        return [self.attempts[p] for p in self.mark_order]

    @property
    def total_attempts(self) -> int:
        return sum(self.attempts.values())


@dataclass
class _Walker:
    tid: int
    start: int
    pos: int
    level: int
    fails: int = 0


def simulate_sgmark(n: int) -> RoundTrace:
    """Synchronous-round model of the deterministic mark-along traversal on the
    minimal perfect skip graph with ``T = 2**n`` threads, two per top-level list.

    Threads aiming at the same node in a round all attempt it; the lowest id
    wins.  Losers drop one level from the contested node (or, on the bottom
    level, count a failure and restart from the top after the second one).
    """
    psg = build_perfect("skipgraph", n, minimal=True)
    top = n - 1
    walkers = [
        _Walker(2 * j + k, j, j, top)
        for j in range(1 << top)
        for k in range(2)
    ]
    marked = set()
    trace = RoundTrace()

    def next_unmarked(level: int, pos: int) -> Optional[int]:
        for p in psg.members(level, pos):
            if p >= pos and p not in marked:
                return p
        return None

    active = walkers
    while active:
        targets: Dict[int, List[_Walker]] = {}
        still = []
        for w in active:
            tgt = next_unmarked(w.level, w.pos)
            while tgt is None and w.level > 0:
                w.level -= 1
                tgt = next_unmarked(w.level, w.pos)
            if tgt is None:
                continue  # observed empty
            targets.setdefault(tgt, []).append(w)
        for tgt in sorted(targets):
            group = sorted(targets[tgt], key=lambda w: w.tid)
            trace.attempts[tgt] = trace.attempts.get(tgt, 0) + len(group)
            marked.add(tgt)
            trace.mark_order.append(tgt)
            for w in group[1:]:
                w.pos = tgt
                if w.level > 0:
                    w.level -= 1
                else:
                    w.fails += 1
                    if w.fails >= 2:
                        trace.restarts += 1
                        w.fails, w.level, w.pos = 0, top, w.start
                still.append(w)
        still.sort(key=lambda w: w.tid)
        trace.rounds.append(sorted(w.pos for w in still))
        active = still
    return trace


# -- coupon collector -------------------------------------------------------------


def harmonic_expectation(T: int) -> Fraction:
    """T * H(T), the expected number of uniform draws to see all T values."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return T * sum((Fraction(1, i) for i in range(1, T + 1)), Fraction(0))


def coupon_collector(T: int, trials: int, rng: random.Random) -> float:
    """Mean number of SPRAY(log T - 1, 1, 1) operations on the perfect skip list
    until each of the first T positions has been landed on."""
    if T < 2 or T & (T - 1):
        raise ValueError("T must be a power of two >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = T.bit_length() - 1
    dist = enumerate_spray(build_perfect("skiplist", n), SprayParams(n - 1, 1, 1))
    positions = sorted(dist.probs)
    cum = list(itertools.accumulate(float(dist.probs[p]) for p in positions))
    targets = set(range(T))
    total = 0
    for _ in range(trials):
        seen = set()
        draws = 0
        while len(seen) < T:
            x = positions[min(bisect.bisect_right(cum, rng.random() * cum[-1]), len(positions) - 1)]
            draws += 1
            if x in targets:
                seen.add(x)
        total += draws
    return total / trials


# -- CSV emission -------------------------------------------------------------------


def distribution_rows(dists: Iterable[SprayDistribution]) -> List[Tuple[int, int, str, float]]:
    rows = []
    for d in dists:
        for pos in sorted(d.probs):
            q = d.probs[pos]
            rows.append((d.start_list, pos, f"{q.numerator}/{q.denominator}", float(q)))
    return rows


def trace_rows(trace: RoundTrace) -> List[Tuple[int, int, int]]:
    return [(i, pos, trace.attempts[pos]) for i, pos in enumerate(trace.mark_order)]


def sample_spray(structure: PerfectStructure, params: SprayParams, start_list: int, rng: random.Random) -> int:
    pos = _start_position(structure, params, start_list)
    for level in params.levels():
        pos = structure.step(level, pos, rng.randint(0, params.L))
    return pos


__all__: Sequence[str] = (
    "SprayParams",
    "PerfectStructure",
    "SprayDistribution",
    "RoundTrace",
    "build_perfect",
    "enumerate_spray",
    "spray_paths",
    "max_spray_reach",
    "spray_reach_bound",
    "simulate_sgmark",
    "harmonic_expectation",
    "coupon_collector",
)
