"""Command-line entry point: ``skipgraph bench ...`` and ``skipgraph oracle ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import random
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import oracle
from .bench import STRUCTURES, WorkloadConfig, emit_heatmap, preset, run_workload
from .topology import Topology


def _bench_parser(sub) -> None:
    p = sub.add_parser("bench", help="run a timed workload and print a JSON report")
    p.add_argument("--structure", default="lazy-layered-sg", choices=sorted(STRUCTURES))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--duration-ms", type=int, default=1000)
    p.add_argument("--workload", help="preset such as HC-WH or MC-PQ (sets keyspace and update percent)")
    p.add_argument("--update-pct", type=float)
    p.add_argument("--keyspace", type=int)
    p.add_argument("--preload", type=float, help="preload fraction of the keyspace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topology", type=Path, help="JSON topology description")
    p.add_argument("--load-balance", action="store_true")
    p.add_argument("--balance-period-ms", type=float, default=10.0)
    p.add_argument("--balance-mode", choices=("literal", "max0"), default="literal")
    p.add_argument("--pattern", choices=("uniform", "single-inserter", "two-groups"), default="uniform")
    p.add_argument("--commission-ns", type=int)
    p.add_argument("--faux-removal", action="store_true")
    p.add_argument("--record-ranks", action="store_true")
    p.add_argument("--lazy-levels", action="store_true")
    p.add_argument("--record-history", action="store_true")
    p.add_argument("--track-writers", action="store_true")
    p.add_argument("--max-ops", type=int, help="stop each thread after this many operations")
    p.add_argument("--no-pin", action="store_true")
    p.add_argument("--switch-interval", type=float, help="interpreter thread switch interval in seconds")
    p.add_argument("--emit-heatmap", type=Path, metavar="PATH")
    p.add_argument("--report", type=Path, metavar="PATH", help="write the JSON report here instead of stdout")


def _oracle_parser(sub) -> None:
    p = sub.add_parser("oracle", help="exact models of perfect skip graphs and skip lists")
    osub = p.add_subparsers(dest="what", required=True)

    def structure_args(q) -> None:
        q.add_argument("--kind", choices=oracle.KINDS, default="skipgraph")
        q.add_argument("--n", type=int, required=True, help="log2 of the thread count")
        q.add_argument("--length", type=int, help="bottom-list length (default: long enough for any walk)")
        q.add_argument("--H", type=int)
        q.add_argument("--L", type=int)
        q.add_argument("--D", type=int, default=1)
        q.add_argument("--out", type=Path)

    structure_args(osub.add_parser("spray", help="exact landing distribution per start list"))
    structure_args(osub.add_parser("reach", help="furthest reachable landing position"))
    q = osub.add_parser("sgmark", help="synchronous-round trace of the mark-along traversal")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--out", type=Path)
    q = osub.add_parser("coupon", help="sprays needed to cover the first T positions")
    q.add_argument("--T", type=int, required=True)
    q.add_argument("--trials", type=int, default=10_000)
    q.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skipgraph", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)
    _bench_parser(sub)
    _oracle_parser(sub)
    return parser


def _config_from_args(a) -> WorkloadConfig:
    keyspace, update = 1 << 11, 50.0
    if a.workload:
        keyspace, update = preset(a.workload)
    if a.keyspace is not None:
        keyspace = a.keyspace
    if a.update_pct is not None:
        update = a.update_pct
    topo = Topology.from_file(a.topology) if a.topology else None
    return WorkloadConfig(
        structure=a.structure,
        threads=a.threads,
        duration_ms=a.duration_ms,
        update_pct=update,
        keyspace=keyspace,
        preload_fraction=a.preload,
        seed=a.seed,
        topology=topo,
        load_balancing=a.load_balance,
        balance_period_ms=a.balance_period_ms,
        balance_mode=a.balance_mode,
        commission_ns=a.commission_ns,
        faux_removal=a.faux_removal,
        record_ranks=a.record_ranks or a.faux_removal,
        lazy_levels=a.lazy_levels,
        record_history=a.record_history,
        track_writers=a.track_writers,
        pattern=a.pattern,
        max_ops=a.max_ops,
        pin=not a.no_pin,
        switch_interval_s=a.switch_interval,
    )


def _write_rows(rows: List[Sequence], header: Sequence[str], out: Optional[Path]) -> None:
    f = out.open("w", newline="") if out else sys.stdout
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if out:
            f.close()


def _params(a, n: int) -> oracle.SprayParams:
    d = oracle.SprayParams.default(1 << n)
    return oracle.SprayParams(d.H if a.H is None else a.H, d.L if a.L is None else a.L, a.D)


def _run_oracle(a) -> None:
    if a.what in ("spray", "reach"):
        st = oracle.build_perfect(a.kind, a.n, minimal=False, length=a.length)
        params = _params(a, a.n)
        if a.what == "reach":
            print(oracle.max_spray_reach(st, params))
            return
        dists = [oracle.enumerate_spray(st, params, j) for j in oracle.start_lists(st, params)]
        _write_rows(oracle.distribution_rows(dists), ("start_list", "position", "probability", "float"), a.out)
    elif a.what == "sgmark":
        trace = oracle.simulate_sgmark(a.n)
        _write_rows(oracle.trace_rows(trace), ("order", "position", "attempts"), a.out)
    else:
        mean = oracle.coupon_collector(a.T, a.trials, random.Random(a.seed))
        exact = oracle.harmonic_expectation(a.T)
        print(f"mean={mean:.4f} expected={float(exact):.4f} ({exact})")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if a.cmd == "bench":
            report = run_workload(_config_from_args(a))
            if a.emit_heatmap and report.ledger is not None:
                emit_heatmap(report.ledger, a.emit_heatmap)
            text = report.to_json()
            if a.report:
                a.report.write_text(text + "\n")
            else:
                print(text)
            if not report.audit.ok:
                print("conservation audit failed", file=sys.stderr)
                return 1
        else:
            _run_oracle(a)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
