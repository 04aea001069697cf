"""Acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line; the lines are also collected into an
"acceptance criteria" section at the end of the pytest run.
"""

import random
import time
from fractions import Fraction

import pytest
from sortedcontainers import SortedSet

from skipgraph.bench import (
    STRUCTURES,
    WorkloadConfig,
    build_structure,
    load_balance_experiment,
    pq_keydist_experiment,
    preset,
    record_history,
    run_workload,
    writer_bound_violations,
)
from skipgraph.history import check_linearizability
from skipgraph.oracle import (
    SprayParams,
    build_perfect,
    coupon_collector,
    enumerate_spray,
    harmonic_expectation,
    max_spray_reach,
    simulate_sgmark,
    start_lists,
)

MAP_STRUCTURES = sorted(n for n, s in STRUCTURES.items() if s.kind == "map")

pytestmark = pytest.mark.acceptance


def _sequential_mismatches(name: str, nops: int, seed: int) -> int:
    cfg = WorkloadConfig(structure=name, threads=1, keyspace=1 << 10, instrument=False, pin=False)
    h = build_structure(cfg).handles[0]
    ref = SortedSet()
    rng = random.Random(seed)
    bad = 0
    for _ in range(nops):
        op = rng.randrange(3)
        k = rng.randint(1, 1 << 10)
        if op == 0:
            expect = k not in ref
            ref.add(k)
            got = h.insert(k)
        elif op == 1:
            expect = k in ref
            ref.discard(k)
            got = h.remove(k)
        else:
            expect = k in ref
            got = h.contains(k)
        bad += got != expect
    return bad


def test_c01_sequential_equivalence(criterion):
    mismatches, times = {}, {}
    for name in MAP_STRUCTURES:
        t0 = time.perf_counter()
        mismatches[name] = _sequential_mismatches(name, 100_000, seed=1)
        times[name] = round(time.perf_counter() - t0, 2)
    ok = all(v == 0 for v in mismatches.values()) and all(t < 10 for t in times.values())
    criterion(1, ok, f"10^5 ops per variant, mismatches={mismatches}, seconds={times}")
    assert ok


def test_c02_linearizability(criterion):
    t0 = time.perf_counter()
    failures = {}
    for name in MAP_STRUCTURES:
        bad = 0
        for seed in range(200):
            hist, initial = record_history(name, threads=3, ops_per_thread=20, keyspace=8, seed=seed)
            assert len(hist) == 60
            bad += not check_linearizability(hist, initial).ok
        failures[name] = bad
    elapsed = time.perf_counter() - t0
    ok = all(v == 0 for v in failures.values()) and elapsed < 300
    criterion(2, ok, f"200 histories per variant, violations={failures}, {elapsed:.1f}s")
    assert ok


def test_c03_conservation_under_stress(criterion):
    names = sorted(STRUCTURES)
    failed = []
    runs = 0
    for T in (2, 4, 8):
        for rep in range(20):
            name = names[(rep + T) % len(names)]
            cfg = WorkloadConfig(structure=name, threads=T, duration_ms=1000, update_pct=50,
                                 keyspace=1 << 8, seed=rep, pin=False, instrument=False)
            r = run_workload(cfg)
            runs += 1
            if not r.audit.ok:
                failed.append((name, T, rep))
    ok = not failed
    criterion(3, ok, f"{runs} one-second runs over T in (2,4,8), audit failures={failed}")
    assert ok


def test_c04_skiplist_spray_is_uniform(criterion):
    t0 = time.perf_counter()
    bad = []
    for n in (2, 3, 4):
        T = 1 << n
        st = build_perfect("skiplist", n, minimal=False)
        d = enumerate_spray(st, SprayParams(n - 1, 1, 1))
        want = {p: Fraction(1, T) for p in range(T)}
        if d.probs != want or d.total != 1:
            bad.append(T)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1
    criterion(4, ok, f"exact 1/T on positions 0..T-1 for T in (4,8,16); failing T={bad}; {elapsed:.3f}s")
    assert ok


def test_c05_skipgraph_spray_bound(criterion):
    t0 = time.perf_counter()
    worst = {}
    reach = {}
    for n in (2, 3):
        T = 1 << n
        st = build_perfect("skipgraph", n, minimal=False)
        params = SprayParams.default(T)
        worst[T] = max(enumerate_spray(st, params, j).max_prob() for j in start_lists(st, params))
        reach[T] = max_spray_reach(st, params)
    elapsed = time.perf_counter() - t0
    ok = (
        all(worst[T] <= Fraction(1, T) for T in worst)
        and reach == {4: 4 // 2 + 2 * 3 - 1, 8: 8 // 2 + 3 * 7 - 1}
        and reach == {4: 7, 8: 24}
        and elapsed < 10
    )
    criterion(5, ok, f"max probability {worst}, reach {reach}, {elapsed:.2f}s")
    assert ok


def test_c06_sgmark_contention(criterion):
    t0 = time.perf_counter()
    bad = []
    for n in range(2, 7):
        T = 1 << n
        t = simulate_sgmark(n)
        if len(t.mark_order) != T or t.attempts_in_mark_order != [2] * (T - 1) + [1]:
            bad.append(n)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1
    criterion(6, ok, f"n in 2..6 give T marks, attempts 2,...,2,1; failing n={bad}; {elapsed:.3f}s")
    assert ok


def test_c07_coupon_collector(criterion):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    details = []
    ok = True
    for T in (4, 16):
        exact = harmonic_expectation(T)
        # T * H(T) recomputed here from the harmonic sum
        assert exact == T * sum(Fraction(1, k) for k in range(1, T + 1))
        mean = coupon_collector(T, 10_000, rng)
        rel = abs(mean - float(exact)) / float(exact)
        ok &= rel < 0.05 and mean >= 2 * T and exact >= 2 * T
        details.append(f"T={T} mean={mean:.2f} exact={float(exact):.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    assert abs(float(harmonic_expectation(16)) - 54.09) < 0.01
    criterion(7, ok, f"{'; '.join(details)}; {elapsed:.2f}s")
    assert ok


def test_c08_locality_direction(criterion):
    keyspace, upd = preset("HC-WH")
    wins = 0
    rows = []
    for rep in range(5):
        out = {}
        for name in ("lazy-layered-sg", "control-sl"):
            cfg = WorkloadConfig(structure=name, threads=8, duration_ms=1000, update_pct=upd,
                                 keyspace=keyspace, seed=rep, pin=False, switch_interval_s=1e-6)
            r = run_workload(cfg)
            out[name] = (r.ledger.cas_success_rate, r.ledger.band_fraction())
        lazy, ctrl = out["lazy-layered-sg"], out["control-sl"]
        won = lazy[0] > ctrl[0] and lazy[1] > ctrl[1]
        wins += won
        rows.append(f"{lazy[0]:.4f}/{ctrl[0]:.4f} band {lazy[1]:.2f}/{ctrl[1]:.2f}")
    ok = wins >= 4
    criterion(8, ok, f"{wins}/5 paired runs favour lazy-layered-sg (success rate, band): {rows}")
    assert ok


def test_c09_relaxation_ordering(criterion):
    keyspace, _ = preset("MC-PQ")
    wins = 0
    rows = []
    oracle_ok = True
    for rep in range(5):
        res = pq_keydist_experiment(threads=8, duration_ms=1000, keyspace=keyspace, seed=rep)
        sg, sp = res.max_rank("pq-sgmark"), res.max_rank("pq-spray")
        oracle_ok &= res.oracle_sgmark_max_rank <= 8
        won = bool(res.ranks["pq-sgmark"]) and sg < sp
        wins += won
        rows.append(f"{sg}<{sp}")
    ok = wins >= 4 and oracle_ok
    criterion(9, ok, f"{wins}/5 runs with sgmark max rank below spray's {rows}; oracle bound ok={oracle_ok}")
    assert ok


def test_c10_load_balancing(criterion):
    single = load_balance_experiment("single-inserter", threads=4, duration_ms=1000, seed=0)
    sizes = single.index_sizes
    within = min(sizes) > 0 and max(sizes) <= 2 * min(sizes)
    groups = load_balance_experiment("two-groups", threads=4, duration_ms=10_000, seed=0)
    spans = all(lo and hi for lo, hi in groups.index_halves)
    ok = within and spans and single.audit.ok and groups.audit.ok
    criterion(10, ok, f"single-inserter index sizes {sizes}; two-groups halves {groups.index_halves}")
    assert ok


def test_c11_partition_bound(criterion):
    keyspace, upd = preset("MC-WH")
    cfg = WorkloadConfig(structure="lazy-layered-sg", threads=8, duration_ms=1000, update_pct=upd,
                         keyspace=keyspace, seed=0, track_writers=True, pin=False)
    r = run_workload(cfg)
    violations = writer_bound_violations(r.ledger, 8)
    lists = len(r.ledger.writers)
    ok = not violations and lists > 0
    criterion(11, ok, f"{lists} lists written, violations={violations}")
    assert ok
