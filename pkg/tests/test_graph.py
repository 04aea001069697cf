import random
from fractions import Fraction

import pytest

from skipgraph.graph import (
    COMMISSION_NS_PER_THREAD,
    Accessor,
    SkipGraph,
    SkipGraphConfig,
    max_level_for,
)
from skipgraph.layered_map import LayeredMap


@pytest.mark.parametrize("T,expected", [(1, 0), (2, 0), (3, 1), (4, 1), (5, 2), (8, 2), (9, 3), (96, 6)])
def test_max_level_for(T, expected):
    assert max_level_for(T) == expected


def test_config_validation():
    with pytest.raises(ValueError):
        SkipGraphConfig(2, "nope")
    with pytest.raises(ValueError):
        SkipGraphConfig(-1)
    with pytest.raises(ValueError):
        SkipGraphConfig(1, "linked-list")
    with pytest.raises(ValueError):
        SkipGraphConfig(1, promotion_prob=Fraction(1))


def test_for_threads_defaults():
    c = SkipGraphConfig.for_threads(8)
    assert c.max_level == 2 and c.commission_period_ns == 8 * COMMISSION_NS_PER_THREAD
    assert SkipGraphConfig.for_threads(8, "linked-list").max_level == 0
    assert c.partitioned and not c.randomized_height
    assert SkipGraphConfig.for_threads(8, "sparse").randomized_height


def test_head_layout():
    g = SkipGraph(SkipGraphConfig(2))
    assert [len(row) for row in g.heads] == [1, 2, 4]
    assert g.head(2, 0b110).label == 0b10
    assert g.head(1, 0b110).label == 0
    s = SkipGraph(SkipGraphConfig(2, "control-skip-list"))
    assert [len(row) for row in s.heads] == [1, 1, 1]


def test_draw_top_level():
    rng = random.Random(1)
    dense = SkipGraph(SkipGraphConfig(3))
    assert {dense.draw_top_level(rng) for _ in range(50)} == {3}
    sparse = SkipGraph(SkipGraphConfig(3, "sparse"))
    draws = [sparse.draw_top_level(rng) for _ in range(20000)]
    assert max(draws) == 3
    # geometric with p = 1/2, capped: P(0) = 1/2
    assert abs(draws.count(0) / len(draws) - 0.5) < 0.02


def test_nodes_link_only_into_their_own_lists():
    vectors = [0, 1, 2, 3, 0, 1, 2, 3]
    m = LayeredMap(SkipGraphConfig(2), 8, vectors=vectors, mode="nonlazy")
    rng = random.Random(3)
    for k in rng.sample(range(1, 500), 200):
        m.handle(rng.randrange(8)).insert(k)
    g = m.graph
    assert sorted(m.live_keys()) == [n.key for n in g.iter_level(0)]
    for level in (1, 2):
        for label in range(1 << level):
            keys = [n.key for n in g.iter_level(level, label)]
            assert keys == sorted(keys)
            for n in g.iter_level(level, label):
                assert n.label & ((1 << level) - 1) == label
    total_top = sum(len(list(g.iter_level(2, j))) for j in range(4))
    assert total_top == 200


def test_check_retire_is_owner_only_and_waits_for_commission():
    g = SkipGraph(SkipGraphConfig(0, "linked-list", commission_period_ns=1000))
    owner, other = Accessor(tid=1), Accessor(tid=2)
    n = g.new_node(5, None, owner)
    n.cas_mark_valid(0, (False, True), (False, False))
    assert not g.check_retire(n, n.alloc_ts + 10, owner)  # too young
    assert not g.check_retire(n, n.alloc_ts + 10_000, other)
    assert g.check_retire(n, n.alloc_ts + 10_000, owner)
    assert n.get_mark_valid(0) == (True, False)


def test_check_retire_ignores_valid_nodes():
    g = SkipGraph(SkipGraphConfig(0, "linked-list"))
    acc = Accessor(tid=1)
    n = g.new_node(5, None, acc)
    assert not g.check_retire(n, n.alloc_ts + 10**9, acc)


def test_retire_marks_every_level():
    g = SkipGraph(SkipGraphConfig(2))
    acc = Accessor(tid=1)
    n = g.new_node(5, None, acc)
    n.cas_mark_valid(0, (False, True), (False, False))
    assert g.retire(n, acc)
    assert all(n.get_mark(level) for level in range(3))
    assert not g.retire(n, acc)
