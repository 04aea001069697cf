import json

import pytest

from skipgraph.topology import (
    MembershipVector,
    Topology,
    common_suffix,
    generate_membership_vectors,
    renumber_threads,
    suffix_counts,
)


def test_hw_distance_hierarchy():
    t = Topology(2, 1, 2, 2)  # 2 nodes x 2 cores x 2 hyperthreads
    assert t.capacity == 8
    assert t.hw_distance(0, 0) == 0
    assert t.hw_distance(0, 1) == 1  # same core
    assert t.hw_distance(0, 2) == 2  # same cpu
    assert t.hw_distance(0, 4) == 4  # other node


def test_from_dict_with_distance_matrix(tmp_path):
    d = {"distance": [[0, 1, 9], [1, 0, 9], [9, 9, 0]]}
    p = tmp_path / "topo.json"
    p.write_text(json.dumps(d))
    t = Topology.from_file(p)
    assert t.capacity == 3 and t.hw_distance(0, 2) == 9
    with pytest.raises(ValueError):
        Topology.from_dict({"distance": [[0, 1], [1]]})


def test_renumber_identity_for_hierarchy():
    assert renumber_threads(Topology(2, 1, 4, 1), 6) == list(range(6))
    with pytest.raises(ValueError):
        renumber_threads(Topology(1, 1, 2, 1), 3)


def test_renumber_keeps_distance_groups_contiguous():
    # two sockets whose hardware ids interleave: even ids on socket 0, odd on socket 1
    n = 8
    dist = [[0 if i == j else (1 if i % 2 == j % 2 else 5) for j in range(n)] for i in range(n)]
    t = Topology.from_dict({"distance": dist})
    order = renumber_threads(t, n)
    sockets = [hw % 2 for hw in order]
    assert sockets == sorted(sockets) or sockets == sorted(sockets, reverse=True)
    assert sorted(order) == list(range(n))


def test_renumber_nearer_threads_get_nearer_ids():
    n = 8
    dist = [[0 if i == j else (1 if i % 2 == j % 2 else 5) for j in range(n)] for i in range(n)]
    t = Topology.from_dict({"distance": dist})
    order = renumber_threads(t, n)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                # on one side of i, distance never decreases as ids move away
                assert t.hw_distance(order[i], order[j]) <= t.hw_distance(order[i], order[k])


@pytest.mark.parametrize("T", [2, 4, 8, 16, 32])
def test_vectors_power_of_two_partition_exactly(T):
    ml = max(0, (T - 1).bit_length() - 1)
    vs = generate_membership_vectors(Topology.flat(T), T, ml)
    for level in range(ml + 1):
        counts = suffix_counts(vs, level)
        assert len(counts) == 1 << level
        assert set(counts.values()) == {T >> level}


@pytest.mark.parametrize("T", [3, 5, 6, 7, 12, 24])
def test_vectors_non_power_of_two_are_balanced(T):
    ml = max(0, (T - 1).bit_length() - 1)
    vs = generate_membership_vectors(Topology.flat(T), T, ml)
    for level in range(ml + 1):
        counts = suffix_counts(vs, level)
        fair = T / (1 << level)
        assert all(abs(c - fair) < 1 + 1e-9 for c in counts.values())


def test_neighbouring_ids_share_longer_suffixes():
    T = 16
    vs = generate_membership_vectors(Topology.flat(T), T, 3)
    assert all(vs[2 * k] == vs[2 * k + 1] for k in range(T // 2))
    for i in range(T):
        shared = [common_suffix(vs[i], vs[j]) for j in range(i + 1, T)]
        assert shared == sorted(shared, reverse=True)


def test_vector_validation_and_single_thread():
    with pytest.raises(ValueError):
        generate_membership_vectors(Topology.flat(8), 8, 3)
    assert generate_membership_vectors(Topology.flat(1), 1, 0) == [MembershipVector(0, 0)]


def test_membership_vector_bits():
    v = MembershipVector(0b011, 3)
    assert v.bits == (0, 1, 1) and str(v) == "011"
    assert v.suffix(2) == 0b11 and v.suffix(0) == 0
