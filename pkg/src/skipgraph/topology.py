"""Hardware topology, thread renumbering and membership-vector assignment.

Logical thread ids are chosen so that nearby hardware threads get nearby ids;
membership vectors are then derived from the logical order so that threads
with close ids share long vector suffixes (and therefore most of their skip
list).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .graph import max_level_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Topology:
    numa_nodes: int = 1
    cpus_per_node: int = 1
    cores_per_cpu: int = 1
    threads_per_core: int = 1
    distance: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self) -> None:
        for name in ("numa_nodes", "cpus_per_node", "cores_per_cpu", "threads_per_core"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.distance is not None:
            n = len(self.distance)
            if any(len(row) != n for row in self.distance):
                raise ValueError("distance matrix must be square")

    @classmethod
    def flat(cls, nthreads: int) -> "Topology":
        """One socket, one core per thread."""
        return cls(1, 1, max(1, nthreads), 1)

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        dist = d.get("distance")
        if dist is not None:
            dist = tuple(tuple(int(x) for x in row) for row in dist)
        if dist is not None and not any(
            k in d for k in ("numa_nodes", "cpus_per_node", "cores_per_cpu", "threads_per_core")
        ):
            return cls(1, 1, len(dist), 1, dist)
        return cls(
            int(d.get("numa_nodes", 1)),
            int(d.get("cpus_per_node", 1)),
            int(d.get("cores_per_cpu", 1)),
            int(d.get("threads_per_core", 1)),
            dist,
        )

    @classmethod
    def from_file(cls, path) -> "Topology":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def capacity(self) -> int:
        if self.distance is not None:
            return len(self.distance)
        return self.numa_nodes * self.cpus_per_node * self.cores_per_cpu * self.threads_per_core

    def coords(self, hw: int) -> Tuple[int, int, int]:
        """(node, cpu, core) ids of a hardware thread, each globally unique."""
        core = hw // self.threads_per_core
        cpu = core // self.cores_per_cpu
        node = cpu // self.cpus_per_node
        return node, cpu, core

    def hw_distance(self, a: int, b: int) -> int:
        if self.distance is not None:
            return self.distance[a][b]
        if a == b:
            return 0
        na, ca, ka = self.coords(a)
        nb, cb, kb = self.coords(b)
        if ka == kb:
            return 1
        if ca == cb:
            return 2
        if na == nb:
            return 3
        return 4


@dataclass(frozen=True)
class MembershipVector:
    value: int
    length: int

    def suffix(self, level: int) -> int:
        return self.value & ((1 << level) - 1)

    @property
    def bits(self) -> Tuple[int, ...]:
        """Most significant bit first, so the last ``i`` bits are the level-``i`` suffix."""
        return tuple((self.value >> k) & 1 for k in range(self.length - 1, -1, -1))

    def __str__(self) -> str:
        return "".join(map(str, self.bits)) or "λ"


def renumber_threads(topology: Topology, nthreads: int) -> List[int]:
    """Hardware thread for each logical thread, filling a socket before the next."""
    if nthreads < 1:
        raise ValueError("need at least one thread")
    if nthreads > topology.capacity:
        raise ValueError(f"{nthreads} threads exceed topology capacity {topology.capacity}")
    if topology.distance is None:
        # hardware ids already enumerate node > cpu > core > hyperthread
        return list(range(nthreads))
    order = [0]
    left = set(range(1, topology.capacity))
    while len(order) < nthreads:
        last = order[-1]
        nxt = min(left, key=lambda h: (topology.hw_distance(last, h), h))
        left.remove(nxt)
        order.append(nxt)
    return order


def _reverse_bits(x: int, width: int) -> int:
    out = 0
    for _ in range(width):
        out = (out << 1) | (x & 1)
        x >>= 1
    return out


def generate_membership_vectors(
    topology: Topology, nthreads: int, max_level: int
) -> List[MembershipVector]:
    """Membership vector of every logical thread.

    Logical threads are spread evenly over ``2**(max_level+1)`` slots; slot
    pairs share a whole vector and each coarser aligned block of slots shares
    one bit less.  Reversing the slot bits turns "same block" into "same
    suffix", and the even spread keeps every suffix within one thread of its
    fair share.
    """
    if max_level != max_level_for(nthreads):
        raise ValueError(
            f"max_level {max_level} inconsistent with {nthreads} threads "
            f"(expected {max_level_for(nthreads)})"
        )
    renumber_threads(topology, nthreads)  # validates capacity
    if nthreads == 1:
        return [MembershipVector(0, 0)]
    nbits = max_level + 1
    out = []
    for i in range(nthreads):
        slot = (i << nbits) // nthreads
        out.append(MembershipVector(_reverse_bits(slot >> 1, max_level), max_level))
    return out


def suffix_counts(vectors: Sequence[MembershipVector], level: int) -> dict:
    counts: dict = {}
    for v in vectors:
        s = v.suffix(level)
        counts[s] = counts.get(s, 0) + 1
    return counts


def common_suffix(a: MembershipVector, b: MembershipVector) -> int:
    n = 0
    while n < min(a.length, b.length) and a.suffix(n + 1) == b.suffix(n + 1):
        n += 1
    return n


# -- optional host adapter ----------------------------------------------------


def probe_host_topology() -> Topology:
    """Best-effort read of the Linux sysfs CPU tables; falls back to a flat layout."""
    ncpu = os.cpu_count() or 1
    base = Path("/sys/devices/system/cpu")
    try:
        pkgs, cores = set(), set()
        for c in range(ncpu):
            topo = base / f"cpu{c}" / "topology"
            pkgs.add(int((topo / "physical_package_id").read_text()))
            cores.add((int((topo / "physical_package_id").read_text()), int((topo / "core_id").read_text())))
        npkg = max(1, len(pkgs))
        ncore = max(1, len(cores))
        tpc = max(1, ncpu // ncore)
        cpc = max(1, ncore // npkg)
        if npkg * cpc * tpc != ncpu:
            raise ValueError("irregular layout")
        return Topology(npkg, 1, cpc, tpc)
    except (OSError, ValueError) as exc:
        log.debug("topology probe failed (%s); using flat layout", exc)
        return Topology.flat(ncpu)


def pin_current_thread(cpu: int) -> bool:
    """Pin the calling thread to ``cpu`` if the host allows it."""
    try:
        os.sched_setaffinity(0, {cpu % (os.cpu_count() or 1)})
        return True
    except (AttributeError, OSError):
        return False
