import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from trisieve.relstore import (
    BACKWARD,
    FORWARD,
    DuplicatePairError,
    FrozenStoreError,
    RelationStore,
    lookup_by_c,
    lookup_by_x,
    sample_bucket,
)
from trisieve.rng import stream


def test_unseen_key_is_empty():
    s = RelationStore()
    assert lookup_by_x(s, 5) == [] and s.size_by_x(5) == 0
    assert lookup_by_c(s, 5) == [] and s.size_by_c(5) == 0


def test_insert_order_is_kept():
    s = RelationStore()
    s.insert(1, 9)
    s.insert(1, 4)
    assert lookup_by_x(s, 1) == [9, 4] and s.size_by_x(1) == 2
    assert lookup_by_c(s, 4) == [1]


def test_duplicate_rejected():
    s = RelationStore()
    s.insert(1, 2)
    with pytest.raises(DuplicatePairError):
        s.insert(1, 2)


def test_freeze_blocks_inserts():
    s = RelationStore()
    s.insert(0, 0)
    s.freeze()
    with pytest.raises(FrozenStoreError):
        s.insert(1, 1)
    assert lookup_by_x(s, 0) == [0]


def test_bucket_sizes_sum_to_insert_count():
    g = stream(3, "many")
    s = RelationStore()
    seen = set()
    while len(seen) < 100_000:
        x, c = int(g.integers(5000)), int(g.integers(5000))
        if (x, c) not in seen:
            seen.add((x, c))
            s.insert(x, c)
    assert sum(s.size_by_x(k) for k in s.keys(FORWARD)) == 100_000
    assert sum(s.size_by_c(k) for k in s.keys(BACKWARD)) == 100_000


def test_random_relation_matches_shadow():
    g = stream(3, "shadow")
    s = RelationStore()
    shadow = set()
    for _ in range(10_000):
        x, c = int(g.integers(300)), int(g.integers(300))
        if (x, c) in shadow:
            continue
        shadow.add((x, c))
        s.insert(x, c)
    for x in range(300):
        assert set(lookup_by_x(s, x)) == {c for (a, c) in shadow if a == x}
    for c in range(300):
        assert set(lookup_by_c(s, c)) == {a for (a, b) in shadow if b == c}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=200))
def test_bidirectional_consistency(pairs):
    s = RelationStore()
    shadow = []
    for p in pairs:
        if p in shadow:
            with pytest.raises(DuplicatePairError):
                s.insert(*p)
            continue
        s.insert(*p)
        shadow.append(p)
    for x in range(21):
        assert lookup_by_x(s, x) == [c for (a, c) in shadow if a == x]
        for c in lookup_by_x(s, x):
            assert x in lookup_by_c(s, c)
    assert len(s) == len(shadow)


def test_sample_singleton_and_empty():
    s = RelationStore()
    s.insert(7, 3)
    s.freeze()
    g = stream(3, "single")
    assert all(sample_bucket(s, 7, FORWARD, g) == 3 for _ in range(50))
    assert sample_bucket(s, 8, FORWARD, g) is None
    assert sample_bucket(s, 99, BACKWARD, g) is None


def test_sample_bucket_of_four_is_uniform():
    s = RelationStore()
    for c in range(4):
        s.insert(0, c)
    s.freeze()
    g = stream(3, "four")
    draws = np.array([sample_bucket(s, 0, FORWARD, g) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=4) / draws.size
    assert np.all(np.abs(freq - 0.25) <= 0.006)
    assert stats.chisquare(np.bincount(draws, minlength=4)).pvalue > 1e-4


def test_bad_direction():
    with pytest.raises(ValueError):
        RelationStore().sample_bucket(0, "sideways", stream(3, "x"))


def test_snapshot_round_trip():
    s = RelationStore()
    for x, c in [(0, 1), (0, 2), (3, 1)]:
        s.insert(x, c)
    s.freeze()
    back = RelationStore.from_json(s.to_json())
    assert back.frozen and back.to_json() == s.to_json()
    assert lookup_by_c(back, 1) == [0, 3]


def test_csr_view():
    s = RelationStore()
    for x, c in [(0, 5), (2, 5), (2, 7)]:
        s.insert(x, c)
    with pytest.raises(FrozenStoreError):
        s.csr(FORWARD, 3)
    s.freeze()
    ptr, members, keys = s.csr(FORWARD, 3)
    assert ptr.tolist() == [0, 1, 1, 3] and members.tolist() == [5, 5, 7]
    ptr, members, keys = s.csr(BACKWARD)
    assert keys.tolist() == [5, 7] and members.tolist() == [0, 2, 2]
