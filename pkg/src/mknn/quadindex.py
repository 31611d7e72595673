"""PR-quadtree built over sorted Morton codes, plus per-tick object indexing.

Construction never touches pointers: positions are encoded once at l_max,
sorted, and quadrant intervals are split level by level while they hold more
than th_quad objects. The resulting leaf set covers the whole MBR (empty
leaves included), and a flat table z_map of length 4**l_deep maps every
deepest-level code to its leaf ordinal, so point location is one encode and
one gather. A built index is immutable; re-indexing moved objects against an
old index is cheap and exact, only the leaf occupancy changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Rect, count_outside, encode_points, leaf_order_keys

MAX_L_MAX = 10


@dataclass
class QuadIndex:
    """Immutable leaf grid. Leaves are sorted by Morton order key."""

    mbr: Rect
    th_quad: int
    l_max: int
    l_deep: int
    leaf_level: np.ndarray  # int32, per leaf
    leaf_code: np.ndarray  # int64, Morton code at leaf_level
    leaf_key: np.ndarray  # int64, first l_deep code covered
    leaf_span: np.ndarray  # int64, 4**(l_deep - level) codes covered
    z_map: np.ndarray  # int32, length 4**l_deep, code -> leaf ordinal
    build_counts: np.ndarray  # int64, objects per leaf at build time
    n_build: int
    overfull_leaves: int  # leaves at l_max that exceeded th_quad

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_level)

    def locate_codes(self, codes: np.ndarray) -> np.ndarray:
        return self.z_map[codes]

    def locate_points(self, x, y) -> np.ndarray:
        """Leaf ordinal containing each point (clamped to the MBR)."""
        return self.z_map[encode_points(x, y, self.mbr, self.l_deep)]

    def validate(self, rng: np.random.Generator | None = None, probes: int = 10000) -> None:
        """Check structural invariants, raising AssertionError on violation."""
        spans = self.leaf_span
        n_codes = 4**self.l_deep
        assert int(spans.sum()) == n_codes, "leaf spans do not cover the code space"
        assert len(self.z_map) == n_codes
        # Disjointness: sorted keys must tile [0, 4**l_deep) without gaps.
        starts = np.concatenate(([0], np.cumsum(spans)[:-1]))
        assert np.array_equal(starts, self.leaf_key), "leaf intervals overlap or leave gaps"
        below = self.leaf_level < self.l_max
        assert (self.build_counts[below] <= self.th_quad).all(), (
            "leaf above l_max exceeds th_quad"
        )
        # z_map agrees with geometric containment on random probes.
        if rng is None:
            rng = np.random.default_rng(0)
        px = rng.uniform(self.mbr.x_lo, self.mbr.x_hi, probes)
        py = rng.uniform(self.mbr.y_lo, self.mbr.y_hi, probes)
        ords = self.locate_points(px, py)
        from .geometry import cell_bounds_arrays

        x_lo, y_lo, x_hi, y_hi = cell_bounds_arrays(
            self.leaf_level[ords], self.leaf_code[ords], self.mbr
        )
        inside = (x_lo <= px) & (px <= x_hi) & (y_lo <= py) & (py <= y_hi)
        assert inside.all(), f"locate() disagrees with containment on {int((~inside).sum())} probes"


def build_index(x, y, mbr: Rect, th_quad: int, l_max: int) -> QuadIndex:
    """Build the leaf grid for one snapshot of positions.

    A quadrant splits iff it holds more than th_quad objects and sits above
    l_max; l_deep is the deepest level actually realized, so small inputs get
    shallow grids regardless of l_max.
    """
    if th_quad < 1:
        raise ValueError(f"th_quad must be >= 1, got {th_quad}")
    if not 1 <= l_max <= MAX_L_MAX:
        raise ValueError(f"l_max must be in [1, {MAX_L_MAX}], got {l_max}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    codes_max = encode_points(x, y, mbr, l_max)
    sc = np.sort(codes_max, kind="stable")

    out_levels: list[np.ndarray] = []
    out_codes: list[np.ndarray] = []
    out_counts: list[np.ndarray] = []
    cur_codes = np.zeros(1, dtype=np.int64)
    cur_start = np.zeros(1, dtype=np.int64)
    cur_end = np.full(1, n, dtype=np.int64)
    level = 0
    overfull = 0
    while cur_codes.size:
        counts = cur_end - cur_start
        if level == l_max:
            out_levels.append(np.full(len(cur_codes), level, dtype=np.int32))
            out_codes.append(cur_codes)
            out_counts.append(counts)
            overfull = int((counts > th_quad).sum())
            break
        split = counts > th_quad
        keep = ~split
        if keep.any():
            out_levels.append(np.full(int(keep.sum()), level, dtype=np.int32))
            out_codes.append(cur_codes[keep])
            out_counts.append(counts[keep])
        if not split.any():
            break
        parents = cur_codes[split]
        p_start = cur_start[split]
        p_end = cur_end[split]
        child_codes = (parents[:, None] * 4 + np.arange(4, dtype=np.int64)).ravel()
        # Children partition the parent interval; boundaries come from the
        # sorted l_max codes, where a child's range starts at its key.
        shift = 2 * (l_max - level - 1)
        inner = np.left_shift(
            parents[:, None] * 4 + np.arange(1, 4, dtype=np.int64), shift
        )
        bounds = np.searchsorted(sc, inner.ravel()).reshape(-1, 3)
        cur_start = np.column_stack([p_start, bounds[:, 0], bounds[:, 1], bounds[:, 2]]).ravel()
        cur_end = np.column_stack([bounds[:, 0], bounds[:, 1], bounds[:, 2], p_end]).ravel()
        cur_codes = child_codes
        level += 1

    levels = np.concatenate(out_levels)
    codes = np.concatenate(out_codes)
    counts = np.concatenate(out_counts)
    l_deep = int(levels.max())
    keys = leaf_order_keys(levels, codes, l_deep)
    order = np.argsort(keys, kind="stable")
    levels = levels[order]
    codes = codes[order]
    counts = counts[order]
    keys = keys[order]
    spans = np.left_shift(np.int64(1), 2 * (l_deep - levels.astype(np.int64)))
    z_map = np.repeat(np.arange(len(levels), dtype=np.int32), spans)
    if len(z_map) != 4**l_deep:
        raise AssertionError("leaf spans do not tile the code space")
    return QuadIndex(
        mbr=mbr,
        th_quad=th_quad,
        l_max=l_max,
        l_deep=l_deep,
        leaf_level=levels,
        leaf_code=codes,
        leaf_key=keys,
        leaf_span=spans,
        z_map=z_map,
        build_counts=counts,
        n_build=n,
        overfull_leaves=overfull,
    )


@dataclass
class ObjectStore:
    """Current-tick objects sorted by leaf, with per-leaf half-open ranges.

    active_cells lists the ordinals of leaves that hold at least one object;
    everything else about the tick (ids, coordinates, Morton codes) sits in
    parallel arrays so per-leaf slices are contiguous views.
    """

    ids: np.ndarray  # int64
    x: np.ndarray
    y: np.ndarray
    codes: np.ndarray  # int64 at l_deep, sorted
    leaf_ord: np.ndarray  # int64 per object
    cell_start: np.ndarray  # int64 per leaf
    cell_end: np.ndarray  # int64 per leaf
    active_cells: np.ndarray  # int64 ordinals
    clamped: int  # objects outside the MBR this tick

    @property
    def n(self) -> int:
        return len(self.ids)


def index_objects(ids, x, y, index: QuadIndex) -> ObjectStore:
    """Sort one tick's objects into the index's leaves."""
    ids = np.asarray(ids, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    clamped = count_outside(x, y, index.mbr)
    codes = encode_points(x, y, index.mbr, index.l_deep)
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    leaf_ord = index.z_map[codes].astype(np.int64)
    grid = np.arange(index.n_leaves, dtype=np.int64)
    cell_start = np.searchsorted(leaf_ord, grid, side="left")
    cell_end = np.searchsorted(leaf_ord, grid, side="right")
    return ObjectStore(
        ids=ids[order],
        x=x[order],
        y=y[order],
        codes=codes,
        leaf_ord=leaf_ord,
        cell_start=cell_start,
        cell_end=cell_end,
        active_cells=np.flatnonzero(cell_end > cell_start),
        clamped=clamped,
    )


def dump_index(index: QuadIndex, store: ObjectStore | None = None) -> str:
    """Leaf table as CSV text: ordinal, level, code, object range."""
    lines = ["ordinal,level,code,start,end"]
    if store is not None:
        starts, ends = store.cell_start, store.cell_end
    else:
        zeros = np.zeros(index.n_leaves, dtype=np.int64)
        starts = ends = zeros
    for i in range(index.n_leaves):
        lines.append(
            f"{i},{index.leaf_level[i]},{index.leaf_code[i]},{starts[i]},{ends[i]}"
        )
    return "\n".join(lines) + "\n"


def should_rebuild(eval_counts, window: int = 3, factor: float = 1.5) -> bool:
    """Rebuild when the last tick's distance evaluations exceed the trailing
    mean by more than ``factor``.

    ``eval_counts`` is ordered oldest to newest and includes the tick just
    finished. With fewer than window + 1 entries there is no baseline yet and
    the answer is False; equality with the scaled mean is also False.
    """
    counts = list(eval_counts)
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(counts) < window + 1:
        return False
    last = counts[-1]
    trailing = counts[-window - 1 : -1]
    return last > factor * (sum(trailing) / window)
