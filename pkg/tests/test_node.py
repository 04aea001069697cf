import pytest

from skipgraph.node import (
    DIRECT_DELETE,
    KEY_MAX,
    KEY_MIN,
    LAZY_TRANSITIONS,
    SharedNode,
    check_user_key,
)


def make(key=5, **kw):
    kw.setdefault("max_level", 2)
    kw.setdefault("top_level", 2)
    kw.setdefault("owner", 1)
    return SharedNode(key, **kw)


def test_fresh_node_is_unmarked_valid_and_unlinked():
    n = make()
    for level in range(3):
        assert n.next[level] == (None, False, True)
    assert not n.inserted
    assert not n.is_head and not n.is_sentinel


def test_cas_next_requires_expected_successor():
    a, b, c = make(1), make(2), make(3)
    assert a.cas_next(0, None, b)
    assert a.get_next(0) is b
    assert not a.cas_next(0, None, c)
    assert a.cas_next(0, b, c)


def test_cas_next_fails_on_marked_reference_and_keeps_valid():
    a, b = make(1), make(2)
    a.cas_mark_valid(0, (False, True), (False, False))
    assert a.cas_next(0, None, b)
    assert a.get_mark_valid(0) == (False, False)
    assert a.cas_mark(0)
    assert not a.cas_next(0, b, make(3))
    assert not a.cas_mark(0)


def test_cas_mark_valid_compares_whole_pair():
    n = make()
    assert not n.cas_mark_valid(0, (False, False), (True, False))
    assert n.cas_mark_valid(0, *DIRECT_DELETE)
    assert n.get_mark_valid(0) == (True, False)


def test_trace_logs_level_zero_transitions_in_order():
    n = make(trace=True)
    n.cas_mark_valid(0, (False, True), (False, False))
    n.cas_mark_valid(0, (False, False), (False, True))
    n.cas_mark_valid(1, (False, True), (True, True))  # upper level: not logged
    n.cas_mark_valid(0, (False, True), (False, False))
    n.cas_mark_valid(0, (False, False), (True, False))
    seqs = [e[0] for e in n.log]
    assert seqs == sorted(seqs) and len(seqs) == 4
    assert all((old, new) in LAZY_TRANSITIONS for _, old, new in n.log)


def test_user_key_range():
    check_user_key(1)
    check_user_key(KEY_MAX - 1)
    for bad in (KEY_MIN, KEY_MAX, -3):
        with pytest.raises(ValueError):
            check_user_key(bad)
