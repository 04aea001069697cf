"""Workload driver, reports, heatmaps and the experiments built on them."""

from __future__ import annotations

import collections
import csv
import json
import logging
import math
import os
import random
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .balancer import LoadBalancer
from .graph import SkipGraphConfig, max_level_for
from .history import DEFAULT_LIMIT, History, check_linearizability
from .layered_map import LayeredMap
from .metrics import LedgerSummary, merge_ledgers
from .oracle import simulate_sgmark
from .pq import RelaxedPQ
from .topology import Topology, generate_membership_vectors, pin_current_thread, renumber_threads

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StructureSpec:
    kind: str  # "map" or "pq"
    variant: str
    mode: str = "nonlazy"
    use_index: bool = True
    height: str = "partition"  # partition | keyspace | flat
    protocol: Optional[str] = None


STRUCTURES: Dict[str, StructureSpec] = {
    "layered-sg": StructureSpec("map", "dense"),
    "layered-ssg": StructureSpec("map", "sparse"),
    "lazy-layered-sg": StructureSpec("map", "dense", mode="lazy"),
    "layered-sl": StructureSpec("map", "control-skip-list"),
    "layered-ll": StructureSpec("map", "linked-list", height="flat"),
    "control-sl": StructureSpec("map", "control-skip-list", use_index=False, height="keyspace"),
    "pq-spray": StructureSpec("pq", "dense", protocol="spray"),
    "pq-sgmark": StructureSpec("pq", "dense", protocol="sgmark"),
    "pq-spray-control": StructureSpec("pq", "control-skip-list", protocol="spray-control-skiplist"),
}

CONTENTION = {"HC": 1 << 8, "MC": 1 << 11, "LC": 1 << 17}
LOADS = {"RH": 20, "WH": 50, "PQ": 50}
PATTERNS = ("uniform", "single-inserter", "two-groups")


def preset(name: str) -> Tuple[int, int]:
    """``(keyspace, update percent)`` of a workload name such as ``"HC-WH"``."""
    try:
        cont, load = name.upper().split("-")
        return CONTENTION[cont], LOADS[load]
    except (ValueError, KeyError):
        raise ValueError(f"unknown workload {name!r}; expected e.g. HC-WH, MC-PQ") from None


@dataclass
class WorkloadConfig:
    structure: str = "lazy-layered-sg"
    threads: int = 1
    duration_ms: int = 1000
    update_pct: float = 50.0
    keyspace: int = 1 << 11
    preload_fraction: Optional[float] = None
    seed: int = 0
    topology: Optional[Topology] = None
    load_balancing: bool = False
    balance_period_ms: float = 10.0
    balance_mode: str = "literal"
    commission_ns: Optional[int] = None
    faux_removal: bool = False
    record_ranks: bool = False
    lazy_levels: bool = False
    record_history: bool = False
    instrument: bool = True
    track_writers: bool = False
    pattern: str = "uniform"
    max_ops: Optional[int] = None
    pin: bool = True
    switch_interval_s: Optional[float] = None

    def __post_init__(self) -> None:
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}; choose from {sorted(STRUCTURES)}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 <= self.update_pct <= 100:
            raise ValueError("update percent must lie in [0, 100]")
        if self.keyspace < 2:
            raise ValueError("keyspace must be >= 2")
        if self.duration_ms < 0:
            raise ValueError("duration must be >= 0")
        if self.preload_fraction is None:
            self.preload_fraction = 0.025 if self.keyspace >= CONTENTION["LC"] else 0.20
        if not 0 <= self.preload_fraction < 1:
            raise ValueError("preload fraction must lie in [0, 1)")
        if self.pattern not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}")
        spec = STRUCTURES[self.structure]
        if self.faux_removal and spec.kind != "pq":
            raise ValueError("faux removal applies to priority-queue structures only")
        if self.record_history and spec.kind != "map":
            raise ValueError("history recording applies to map structures only")
        if self.load_balancing and (not spec.use_index or self.threads < 2):
            raise ValueError("load balancing needs an indexed structure and at least two threads")
        if self.switch_interval_s is not None and self.switch_interval_s <= 0:
            raise ValueError("switch interval must be positive")
        if self.pattern == "two-groups" and (self.threads < 2 or self.keyspace < 4):
            raise ValueError("two-groups pattern needs >= 2 threads and keyspace >= 4")

    @property
    def spec(self) -> StructureSpec:
        return STRUCTURES[self.structure]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["topology"] = None if self.topology is None else asdict(self.topology)
        return d


@dataclass
class Audit:
    ok: bool
    expected: int
    actual: int
    missing: List[int] = field(default_factory=list)
    unexpected: List[int] = field(default_factory=list)
    bad_counts: List[int] = field(default_factory=list)


@dataclass
class Report:
    config: WorkloadConfig
    elapsed_s: float
    ops: int
    effective_updates: int
    pinned: bool
    ledger: Optional[LedgerSummary]
    audit: Audit
    per_thread_ops: List[int]
    index_sizes: List[int] = field(default_factory=list)
    index_halves: List[Tuple[bool, bool]] = field(default_factory=list)
    ranks: Dict[int, List[int]] = field(default_factory=dict)
    balancer: Optional[dict] = None
    history: Optional[History] = None
    preload: List[int] = field(default_factory=list)

    @property
    def throughput_ops_per_ms(self) -> float:
        return self.ops / (self.elapsed_s * 1000) if self.elapsed_s > 0 else 0.0

    @property
    def effective_update_pct(self) -> float:
        return 100.0 * self.effective_updates / self.ops if self.ops else 0.0

    @property
    def all_ranks(self) -> List[int]:
        return [r for rs in self.ranks.values() for r in rs]

    def to_dict(self) -> dict:
        ranks = self.all_ranks
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "elapsed_s": self.elapsed_s,
            "ops": self.ops,
            "per_thread_ops": self.per_thread_ops,
            "throughput_ops_per_ms": self.throughput_ops_per_ms,
            "effective_updates": self.effective_updates,
            "effective_update_pct": self.effective_update_pct,
            "pinned": self.pinned,
            "metrics": None if self.ledger is None else self.ledger.to_dict(),
            "cas_band_fraction": None if self.ledger is None else self.ledger.band_fraction(),
            "audit": asdict(self.audit),
            "index_sizes": self.index_sizes,
            "index_halves": [list(x) for x in self.index_halves],
            "ranks": None if not ranks else {
                "count": len(ranks),
                "max": max(ranks),
                "mean": sum(ranks) / len(ranks),
                "histogram": dict(sorted(collections.Counter(ranks).items())),
            },
            "balancer": self.balancer,
            "history": None if self.history is None else self._history_summary(),
        }

    def _history_summary(self) -> dict:
        n = len(self.history)
        if n > DEFAULT_LIMIT:
            return {"operations": n, "linearizable": None}
        verdict = check_linearizability(self.history, self.preload)
        return {"operations": n, "linearizable": verdict.ok}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# -- structure construction -------------------------------------------------------


def _max_level(spec: StructureSpec, nthreads: int, keyspace: int) -> int:
    if spec.height == "flat":
        return 0
    if spec.height == "keyspace":
        return max(1, math.ceil(math.log2(keyspace)))
    return max_level_for(nthreads)


def build_structure(cfg: WorkloadConfig):
    """The map or queue for ``cfg`` (with membership vectors from its topology)."""
    spec = cfg.spec
    T = cfg.threads
    ml = _max_level(spec, T, cfg.keyspace)
    vectors = None
    if spec.variant in ("dense", "sparse"):
        topo = cfg.topology or Topology.flat(T)
        vectors = [mv.value for mv in generate_membership_vectors(topo, T, ml)]
    if spec.kind == "pq":
        return RelaxedPQ(
            T,
            spec.protocol,
            lazy_levels=cfg.lazy_levels,
            faux=cfg.faux_removal,
            record_ranks=cfg.record_ranks,
            max_level=ml,
            instrument=cfg.instrument,
            track_writers=cfg.track_writers,
            vectors=vectors,
            seed=cfg.seed,
        )
    config = SkipGraphConfig.for_threads(
        T, spec.variant, commission_period_ns=cfg.commission_ns, max_level=ml
    )
    return LayeredMap(
        config,
        T,
        vectors=vectors,
        mode=spec.mode,
        use_index=spec.use_index,
        instrument=cfg.instrument,
        track_writers=cfg.track_writers,
        seed=cfg.seed,
    )


def _key_range(cfg: WorkloadConfig, tid: int) -> Tuple[int, int]:
    K = cfg.keyspace
    if cfg.pattern == "two-groups":
        half = K // 2
        return (1, half) if tid < cfg.threads // 2 else (half + 1, K)
    return 1, K


# -- the driver ---------------------------------------------------------------------


class _Worker:
    def __init__(self, cfg: WorkloadConfig, tid: int, handle, history: Optional[History]) -> None:
        self.cfg = cfg
        self.tid = tid
        self.h = handle
        self.history = history
        self.rng = random.Random((cfg.seed << 16) ^ (0x9E3779B9 * (tid + 1)))
        self.lo, self.hi = _key_range(cfg, tid)
        self.ops = 0
        self.eff = 0
        self.net: collections.Counter = collections.Counter()
        self.pinned = True

    def _call(self, op: str, key: int, fn) -> bool:
        if self.history is not None:
            return self.history.call(self.tid, op, key, fn)
        return fn(key)

    def _update_kind(self, last_insert_ok: bool) -> str:
        pat = self.cfg.pattern
        if pat == "single-inserter":
            return "insert" if self.tid == 0 else "remove"
        return "remove" if last_insert_ok else "insert"

    def run(self, start: threading.Barrier, stop: threading.Event, balancer, hw: Optional[int]) -> None:
        if hw is not None and self.cfg.pin:
            self.pinned = pin_current_thread(hw)
        cfg = self.cfg
        h = self.h
        is_pq = cfg.spec.kind == "pq"
        upd = cfg.update_pct
        max_ops = cfg.max_ops
        rng = self.rng
        lo, hi = self.lo, self.hi
        last_insert_ok = False
        start.wait()
        while not stop.is_set():
            if max_ops is not None and self.ops >= max_ops:
                break
            if balancer is not None:
                balancer.worker_tick(h)
            self.ops += 1
            if is_pq:
                if rng.random() * 100 < upd:
                    key = rng.randint(lo, hi)
                    if h.insert(key):
                        self.net[key] += 1
                        self.eff += 1
                else:
                    got = h.remove_min()
                    if got is not None and not cfg.faux_removal:
                        self.net[got] -= 1
                        self.eff += 1
                continue
            # effective-update discipline: update while successful updates lag the target
            if 100 * self.eff < upd * self.ops:
                key = rng.randint(lo, hi)
                if self._update_kind(last_insert_ok) == "insert":
                    if self._call("insert", key, h.insert):
                        self.net[key] += 1
                        self.eff += 1
                        last_insert_ok = True
                else:
                    if self._call("remove", key, h.remove):
                        self.net[key] -= 1
                        self.eff += 1
                        last_insert_ok = False
            else:
                key = rng.randint(lo, hi)
                self._call("contains", key, h.contains)


def _preload(cfg: WorkloadConfig, structure, rng: random.Random) -> List[int]:
    n = int(cfg.preload_fraction * cfg.keyspace)
    keys: List[int] = []
    if cfg.pattern == "two-groups":
        # each group preloads its own half
        for tid in range(cfg.threads):
            lo, hi = _key_range(cfg, tid)
            share = n // cfg.threads
            keys.extend((tid, k) for k in rng.sample(range(lo, hi + 1), min(share, hi - lo + 1)))
        pairs = keys
    else:
        pairs = [(i % cfg.threads, k) for i, k in enumerate(rng.sample(range(1, cfg.keyspace + 1), n))]
    loaded = []
    seen = set()
    for tid, k in pairs:
        if k in seen:
            continue
        seen.add(k)
        if structure.handles[tid].insert(k):
            loaded.append(k)
    for h in structure.handles:
        mh = getattr(h, "mh", h)
        mh.recent = []
        mh.indexed = 0
        if mh.ledger is not None:
            mh.ledger.reset()
    return loaded


def audit_final_state(live: Sequence[int], preload: Sequence[int], nets: Sequence[collections.Counter]) -> Audit:
    """Check the quiescent key set against preload plus net successful updates."""
    total: collections.Counter = collections.Counter({k: 1 for k in preload})
    for c in nets:
        total.update(c)
    bad = sorted(k for k, v in total.items() if v not in (0, 1))
    expected = {k for k, v in total.items() if v == 1}
    actual = set(live)
    return Audit(
        ok=not bad and expected == actual and len(live) == len(actual),
        expected=len(expected),
        actual=len(live),
        missing=sorted(expected - actual)[:50],
        unexpected=sorted(actual - expected)[:50],
        bad_counts=bad[:50],
    )


def _index_stats(structure, cfg: WorkloadConfig) -> Tuple[List[int], List[Tuple[bool, bool]]]:
    sizes, halves = [], []
    half = cfg.keyspace // 2
    for h in structure.handles:
        mh = getattr(h, "mh", h)
        live = [k for k, n in mh.index.items() if not n.next[0][1]]
        sizes.append(len(live))
        halves.append((any(k <= half for k in live), any(k > half for k in live)))
    return sizes, halves


def run_workload(cfg: WorkloadConfig) -> Report:
    T = cfg.threads
    ncpu = os.cpu_count() or 1
    if T > ncpu:
        log.warning("%d threads exceed %d host CPUs; running oversubscribed", T, ncpu)
    structure = build_structure(cfg)
    rng = random.Random(cfg.seed)
    preload = _preload(cfg, structure, rng)
    history = History() if cfg.record_history else None
    workers = [_Worker(cfg, t, structure.handles[t], history) for t in range(T)]
    balancer = None
    if cfg.load_balancing:
        balancer = LoadBalancer(
            [getattr(h, "mh", h) for h in structure.handles],
            period_s=cfg.balance_period_ms / 1000.0,
            mode=cfg.balance_mode,
        )
    hw_ids: List[Optional[int]] = [None] * T
    if cfg.pin:
        topo = cfg.topology or Topology.flat(max(T, ncpu))
        try:
            hw_ids = [hw % ncpu for hw in renumber_threads(topo, T)]
        except ValueError as exc:
            log.warning("thread renumbering failed (%s); running unpinned", exc)
    old_interval = sys.getswitchinterval()
    if cfg.switch_interval_s is not None:
        sys.setswitchinterval(cfg.switch_interval_s)
    barrier = threading.Barrier(T + 1)
    stop = threading.Event()
    threads = [
        threading.Thread(target=w.run, args=(barrier, stop, balancer, hw_ids[w.tid]), name=f"worker-{w.tid}")
        for w in workers
    ]
    for t in threads:
        t.start()
    if balancer is not None:
        balancer.start()
    barrier.wait()
    t0 = time.perf_counter()
    if cfg.max_ops is None:
        stop.wait(cfg.duration_ms / 1000.0)
        stop.set()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t0
    balancer_stats = None
    if balancer is not None:
        balancer.stop()
        # deliver what was still queued when the workers stopped
        balancer.final_absorb()
    sys.setswitchinterval(old_interval)
    if balancer is not None:
        balancer_stats = asdict(balancer.stats())
        balancer_stats["in_flight"] = balancer.in_flight
    ledgers = [getattr(h, "ledger", None) for h in structure.handles]
    summary = None
    if all(led is not None for led in ledgers):
        for led, w in zip(ledgers, workers):
            led.ops = w.ops
            led.effective_updates = w.eff
        summary = merge_ledgers(ledgers)
    live = structure.live_keys()
    audit = audit_final_state(live, preload, [w.net for w in workers])
    sizes, halves = _index_stats(structure, cfg)
    ranks = {}
    if cfg.spec.kind == "pq":
        ranks = {h.tid: list(h.ranks) for h in structure.handles}
    return Report(
        config=cfg,
        elapsed_s=elapsed,
        ops=sum(w.ops for w in workers),
        effective_updates=sum(w.eff for w in workers),
        pinned=cfg.pin and all(w.pinned for w in workers) and hw_ids[0] is not None,
        ledger=summary,
        audit=audit,
        per_thread_ops=[w.ops for w in workers],
        index_sizes=sizes,
        index_halves=halves,
        ranks=ranks,
        balancer=balancer_stats,
        history=history,
        preload=preload,
    )


# -- heatmaps -----------------------------------------------------------------------


def heatmap_rows(summary: LedgerSummary) -> List[List[str]]:
    n = summary.nthreads
    rows = [["matrix", "accessor"] + [f"owner_{j}" for j in range(n)]]
    ops = [pt["ops"] for pt in summary.per_thread]
    for name, m in (("reads", summary.read_matrix), ("maint_cas", summary.cas_matrix)):
        for i in range(n):
            rows.append([name, str(i)] + [f"{(m[i][j] / ops[i]) if ops[i] else 0.0:.9g}" for j in range(n)])
    return rows


def emit_heatmap(summary: LedgerSummary, path) -> Path:
    """Write the per-operation read and maintenance-CAS matrices as CSV."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            csv.writer(f, lineterminator="\n").writerows(heatmap_rows(summary))
    except OSError as exc:
        raise OSError(f"cannot write heatmap to {path}: {exc}") from exc
    return path


# -- partition bound -------------------------------------------------------------------


def writer_bound_violations(summary: LedgerSummary, nthreads: int) -> List[Tuple[int, int, int]]:
    """Lists whose distinct maintenance writers exceed ``T / 2**level``."""
    out = []
    for (level, label), tids in sorted(summary.writers.items()):
        if len(tids) > nthreads / (1 << level):
            out.append((level, label, len(tids)))
    return out


# -- histories ---------------------------------------------------------------------------


def record_history(
    structure: str,
    *,
    threads: int = 3,
    ops_per_thread: int = 20,
    keyspace: int = 8,
    seed: int = 0,
    commission_ns: Optional[int] = 0,
) -> Tuple[History, frozenset]:
    """Run a short concurrent burst on a fresh map and return its history and preload."""
    cfg = WorkloadConfig(
        structure=structure, threads=threads, keyspace=keyspace, seed=seed,
        preload_fraction=0.0, instrument=False, commission_ns=commission_ns, pin=False,
    )
    m = build_structure(cfg)
    rng = random.Random(seed)
    initial = frozenset(k for k in range(1, keyspace + 1) if rng.random() < 0.5)
    for i, k in enumerate(sorted(initial)):
        m.handles[i % threads].insert(k)
    hist = History()
    plans = [
        [(rng.choice(("insert", "remove", "contains")), rng.randint(1, keyspace)) for _ in range(ops_per_thread)]
        for _ in range(threads)
    ]
    barrier = threading.Barrier(threads)

    def body(tid: int) -> None:
        h = m.handles[tid]
        fns = {"insert": h.insert, "remove": h.remove, "contains": h.contains}
        barrier.wait()
        for op, key in plans[tid]:
            hist.call(tid, op, key, fns[op])

    old = sys.getswitchinterval()
    sys.setswitchinterval(1e-6)
    try:
        ts = [threading.Thread(target=body, args=(t,)) for t in range(threads)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    finally:
        sys.setswitchinterval(old)
    return hist, initial


# -- experiments ------------------------------------------------------------------------


@dataclass
class KeydistResult:
    ranks: Dict[str, List[int]]
    oracle_sgmark_max_rank: int

    def max_rank(self, protocol: str) -> int:
        return max(self.ranks[protocol]) if self.ranks[protocol] else 0

    def histogram(self, protocol: str) -> Dict[int, int]:
        return dict(sorted(collections.Counter(self.ranks[protocol]).items()))


def pq_keydist_experiment(
    threads: int = 8,
    duration_ms: int = 1000,
    keyspace: int = CONTENTION["MC"],
    seed: int = 0,
    protocols: Sequence[str] = ("pq-spray", "pq-sgmark"),
    out: Optional[os.PathLike] = None,
) -> KeydistResult:
    """Faux-removal runs recording the rank each removal would have taken."""
    ranks = {}
    for name in protocols:
        cfg = WorkloadConfig(
            structure=name, threads=threads, duration_ms=duration_ms, update_pct=50,
            keyspace=keyspace, seed=seed, faux_removal=True, record_ranks=True, pin=False,
        )
        ranks[name] = run_workload(cfg).all_ranks
    n = max(1, (threads - 1).bit_length())
    oracle_max = max(simulate_sgmark(n).mark_order) if threads >= 2 else 0
    res = KeydistResult(ranks, oracle_max)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["structure", "rank", "count"])
            for name in protocols:
                for rank, count in res.histogram(name).items():
                    w.writerow([name, rank, count])
    return res


def load_balance_experiment(
    scenario: str,
    *,
    threads: int = 4,
    duration_ms: int = 1000,
    keyspace: int = CONTENTION["MC"],
    balancing: bool = True,
    structure: str = "lazy-layered-sg",
    seed: int = 0,
    switch_interval_s: Optional[float] = 1e-4,
) -> Report:
    """``scenario`` is ``single-inserter`` or ``two-groups``.

    A short interpreter switch interval keeps the coordinator close to its
    nominal round period while the workers saturate the interpreter lock.
    """
    if scenario not in ("single-inserter", "two-groups"):
        raise ValueError("scenario must be single-inserter or two-groups")
    cfg = WorkloadConfig(
        structure=structure, threads=threads, duration_ms=duration_ms, update_pct=50,
        keyspace=keyspace, seed=seed, load_balancing=balancing, pattern=scenario, pin=False,
        switch_interval_s=switch_interval_s,
    )
    return run_workload(cfg)
