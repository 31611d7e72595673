"""Index construction checked against an independent recursive splitter.

The reference splitter descends one quadrant at a time with plain per-point
counting; the production builder works level-wise over one sorted code
array. Both must emit the same leaf set.
"""

import numpy as np
import pytest

from mknn.geometry import Rect, encode_points, leaf_order_keys
from mknn.quadindex import (
    QuadIndex,
    build_index,
    dump_index,
    index_objects,
    should_rebuild,
)

REGION = Rect.square(1024.0)


def reference_leaves(x, y, mbr, th_quad, l_max):
    """Recursive splitter: returns {(level, code), ...} of the full cover."""
    out = []

    def descend(level, code, idx):
        if len(idx) > th_quad and level < l_max:
            child_codes = encode_points(x[idx], y[idx], mbr, level + 1)
            for q in range(4):
                child = code * 4 + q
                descend(level + 1, child, idx[child_codes == child])
        else:
            out.append((level, code))

    descend(0, 0, np.arange(len(x)))
    return set(out)


def as_leaf_set(index: QuadIndex):
    return set(zip(index.leaf_level.tolist(), index.leaf_code.tolist()))


def test_small_input_stays_root():
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([1.0, 2.0, 3.0])
    idx = build_index(x, y, REGION, 4, 8)
    assert idx.n_leaves == 1
    assert idx.l_deep == 0
    assert as_leaf_set(idx) == {(0, 0)}


def test_crowded_sw_quadrant_splits_alone():
    # five points in SW with th_quad=4: SW splits, the other three
    # level-1 quadrants stay whole
    x = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
    y = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
    idx = build_index(x, y, REGION, 4, 8)
    leaves = as_leaf_set(idx)
    assert (1, 1) in leaves and (1, 2) in leaves and (1, 3) in leaves
    assert (1, 0) not in leaves  # SW was split
    assert leaves == reference_leaves(x, y, REGION, 4, 8)


def test_coincident_points_stop_at_l_max():
    x = np.array([5.0, 5.0])
    y = np.array([5.0, 5.0])
    idx = build_index(x, y, REGION, 1, 3)
    assert idx.l_deep == 3
    assert idx.overfull_leaves == 1
    deepest = idx.build_counts[idx.leaf_level == 3]
    assert deepest.max() == 2  # depth cap wins over capacity


def test_builder_matches_recursive_splitter():
    rng = np.random.default_rng(31)
    for trial in range(25):
        n = int(rng.integers(0, 400))
        th = int(rng.integers(1, 20))
        lm = int(rng.integers(1, 7))
        if rng.uniform() < 0.5:
            x = rng.uniform(0, 1024.0, n)
            y = rng.uniform(0, 1024.0, n)
        else:
            # clustered: stress unbalanced splitting
            x = np.clip(rng.normal(200.0, 30.0, n), 0, 1024.0)
            y = np.clip(rng.normal(800.0, 30.0, n), 0, 1024.0)
        idx = build_index(x, y, REGION, th, lm)
        assert as_leaf_set(idx) == reference_leaves(x, y, REGION, th, lm)
        idx.validate(rng=np.random.default_rng(trial), probes=2000)


def test_empty_input_single_leaf():
    idx = build_index(np.zeros(0), np.zeros(0), REGION, 4, 8)
    assert idx.n_leaves == 1
    assert idx.l_deep == 0
    assert idx.locate_points(np.array([500.0]), np.array([7.0]))[0] == 0


def test_cover_and_capacity_invariants():
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1024.0, 1000)
    y = rng.uniform(0, 1024.0, 1000)
    idx = build_index(x, y, REGION, 64, 10)
    assert int(idx.leaf_span.sum()) == 4**idx.l_deep
    below = idx.leaf_level < idx.l_max
    assert (idx.build_counts[below] <= 64).all()
    idx.validate()


def test_build_determinism():
    rng = np.random.default_rng(13)
    x = rng.uniform(0, 1024.0, 300)
    y = rng.uniform(0, 1024.0, 300)
    a = build_index(x, y, REGION, 8, 8)
    b = build_index(x, y, REGION, 8, 8)
    assert np.array_equal(a.leaf_code, b.leaf_code)
    assert np.array_equal(a.leaf_level, b.leaf_level)
    assert np.array_equal(a.z_map, b.z_map)


def test_leaves_sorted_by_order_key():
    rng = np.random.default_rng(17)
    x = rng.uniform(0, 1024.0, 500)
    y = rng.uniform(0, 1024.0, 500)
    idx = build_index(x, y, REGION, 16, 8)
    keys = leaf_order_keys(idx.leaf_level, idx.leaf_code, idx.l_deep)
    assert (np.diff(keys) > 0).all()
    assert np.array_equal(keys, idx.leaf_key)


def test_index_objects_single_object():
    idx = build_index(np.array([3.0]), np.array([3.0]), REGION, 4, 8)
    store = index_objects(np.array([42]), np.array([3.0]), np.array([3.0]), idx)
    assert store.n == 1
    assert len(store.active_cells) == 1
    leaf = store.active_cells[0]
    assert (store.cell_start[leaf], store.cell_end[leaf]) == (0, 1)


def test_index_objects_intervals_partition_store():
    rng = np.random.default_rng(29)
    n = 1000
    x = rng.uniform(0, 1024.0, n)
    y = rng.uniform(0, 1024.0, n)
    ids = np.arange(n, dtype=np.int64)
    idx = build_index(x, y, REGION, 64, 10)
    store = index_objects(ids, x, y, idx)
    sizes = store.cell_end - store.cell_start
    assert int(sizes.sum()) == n
    # every leaf below l_max holds at most th_quad objects
    assert (sizes[idx.leaf_level < idx.l_max] <= 64).all()
    # each stored object really lies in its leaf per locate()
    located = idx.locate_points(store.x, store.y)
    want = np.repeat(np.arange(idx.n_leaves), sizes)
    assert np.array_equal(located, want)
    # store order concatenates to a Morton-sorted sequence
    codes = encode_points(store.x, store.y, REGION, idx.l_deep)
    assert (np.diff(codes) >= 0).all()


def test_index_objects_presorted_is_noop_permutation():
    rng = np.random.default_rng(41)
    x = rng.uniform(0, 1024.0, 200)
    y = rng.uniform(0, 1024.0, 200)
    idx = build_index(x, y, REGION, 16, 8)
    first = index_objects(np.arange(200), x, y, idx)
    again = index_objects(first.ids, first.x, first.y, idx)
    assert np.array_equal(again.ids, first.ids)


def test_index_objects_counts_clamped():
    idx = build_index(np.array([1.0]), np.array([1.0]), REGION, 4, 4)
    store = index_objects(
        np.array([1, 2]), np.array([0.5, 2000.0]), np.array([0.5, 3.0]), idx
    )
    assert store.clamped == 1


def test_dump_index_format():
    x = np.array([10.0, 20.0, 800.0])
    y = np.array([10.0, 20.0, 800.0])
    idx = build_index(x, y, REGION, 4, 8)
    store = index_objects(np.arange(3), x, y, idx)
    text = dump_index(idx, store)
    lines = text.strip().splitlines()
    assert lines[0] == "ordinal,level,code,start,end"
    assert len(lines) == idx.n_leaves + 1
    first = lines[1].split(",")
    assert [int(v) for v in first] == [0, 0, 0, 0, 3]


def test_should_rebuild_rule():
    assert should_rebuild([100, 100, 100, 500], window=3, factor=1.5) is True
    assert should_rebuild([100, 100, 100, 150], window=3, factor=1.5) is False
    # strict excess required: equality keeps the index
    assert should_rebuild([100, 100, 100, 100], window=3, factor=1.0) is False
    # not enough history yet
    assert should_rebuild([100, 500], window=3, factor=1.5) is False
    assert should_rebuild([], window=3, factor=1.5) is False


def test_build_rejects_bad_params():
    with pytest.raises(ValueError):
        build_index(np.zeros(1), np.zeros(1), REGION, 0, 8)
    with pytest.raises(ValueError):
        build_index(np.zeros(1), np.zeros(1), REGION, 4, 0)
    with pytest.raises(ValueError):
        build_index(np.zeros(1), np.zeros(1), REGION, 4, 11)
