import random
import threading
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skipgraph.graph import SkipGraphConfig
from skipgraph.layered_map import LayeredMap
from skipgraph.node import LAZY_TRANSITIONS, LEGAL_TRANSITIONS

VARIANTS = [
    ("dense", "lazy", True),
    ("dense", "nonlazy", True),
    ("sparse", "nonlazy", True),
    ("control-skip-list", "nonlazy", True),
    ("linked-list", "nonlazy", True),
    ("control-skip-list", "nonlazy", False),
]
IDS = [f"{v}-{m}-{'idx' if i else 'noidx'}" for v, m, i in VARIANTS]


def build(variant, mode, use_index, T=4, commission=0, trace=False):
    cfg = SkipGraphConfig.for_threads(T, variant, commission_period_ns=commission)
    if trace:
        cfg = SkipGraphConfig(cfg.max_level, variant, commission, trace=True)
    return LayeredMap(cfg, T, mode=mode, use_index=use_index)


ops = st.lists(
    st.tuples(st.sampled_from(["insert", "remove", "contains"]), st.integers(1, 40), st.integers(0, 3)),
    max_size=300,
)


@pytest.mark.parametrize("variant,mode,use_index", VARIANTS, ids=IDS)
@settings(max_examples=40, deadline=None)
@given(seq=ops)
def test_matches_reference_set(variant, mode, use_index, seq):
    m = build(variant, mode, use_index)
    ref = set()
    for op, key, tid in seq:
        h = m.handle(tid)
        if op == "insert":
            assert h.insert(key) == (key not in ref)
            ref.add(key)
        elif op == "remove":
            assert h.remove(key) == (key in ref)
            ref.discard(key)
        else:
            assert h.contains(key) == (key in ref)
    assert sorted(m.live_keys()) == sorted(ref)


def test_get_returns_value_of_live_key():
    m = build("dense", "lazy", True)
    h = m.handle(0)
    h.insert(7, "seven")
    assert h.get(7) == "seven" and m.handle(1).get(7) == "seven"
    h.remove(7)
    assert h.get(7, "gone") == "gone"


def test_lazy_reinsert_revalidates_existing_node():
    m = build("dense", "lazy", True, commission=10**12)
    h = m.handle(0)
    h.insert(3)
    node = h.index.find(3)
    h.remove(3)
    assert node.get_mark_valid(0) == (False, False)
    assert m.handle(1).insert(3)
    assert node.get_mark_valid(0) == (False, True)


def test_nonlazy_remove_marks_node():
    m = build("dense", "nonlazy", True)
    h = m.handle(0)
    h.insert(3)
    node = h.index.find(3)
    assert m.handle(2).remove(3)
    assert node.get_mark_valid(0) == (True, False)
    assert all(node.get_mark(level) for level in range(node.top_level + 1))


def test_rejects_reserved_keys():
    h = build("dense", "lazy", True).handle(0)
    with pytest.raises(ValueError):
        h.insert(0)


def test_wrong_vector_count():
    with pytest.raises(ValueError):
        LayeredMap(SkipGraphConfig(1), 4, vectors=[0, 1])


@pytest.mark.parametrize("variant,mode,use_index", VARIANTS, ids=IDS)
def test_concurrent_conservation_and_legal_transitions(variant, mode, use_index, fine_switching):
    T = 4
    m = build(variant, mode, use_index, T=T, commission=0, trace=True)
    nets = [Counter() for _ in range(T)]
    start = threading.Barrier(T)

    def body(tid):
        rng = random.Random(tid)
        h = m.handle(tid)
        start.wait()
        for _ in range(1500):
            k = rng.randint(1, 32)
            r = rng.random()
            if r < 0.4:
                if h.insert(k):
                    nets[tid][k] += 1
            elif r < 0.8:
                if h.remove(k):
                    nets[tid][k] -= 1
            else:
                h.contains(k)

    ts = [threading.Thread(target=body, args=(t,)) for t in range(T)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    total = Counter()
    for c in nets:
        total.update(c)
    assert all(v in (0, 1) for v in total.values())
    assert sorted(m.live_keys()) == sorted(k for k, v in total.items() if v == 1)
    allowed = LAZY_TRANSITIONS if mode == "lazy" else LEGAL_TRANSITIONS
    for n in m.graph.iter_level(0, include_dead=True):
        assert all((old, new) in allowed for _, old, new in n.log)
