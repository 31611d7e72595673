"""Tick processor answering one k-NN query batch per tick.

Each tick runs two phases over shared flat result lanes. The first iteration
pairs every query with its own leaf's objects, bucket-selects a distance
threshold per query and copies qualifying candidates. The iterative phase
then walks the leaf sequence outward per query in Morton order, one leaf per
direction per iteration, alternating left and right; quadrants whose cells
cannot beat the query's current k-th distance are pruned on the virtual full
quadtree without touching the leaf table, and each visited leaf's objects are
merged into the query's list by a fresh bucket selection. A query leaves a
direction when its cursor exhausts the code space, which with a full list
happens after a handful of coarse skips.

All distance comparisons happen in squared space; square roots are taken
once at emission. Tasks touch disjoint result rows, so threaded execution
changes timing only, never output.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Rect,
    cell_bounds_arrays,
    encode_points,
    min_dist2_point_cells,
    squared_dist_matrix,
)
from .kselect import select_rows
from .quadindex import (
    ObjectStore,
    QuadIndex,
    build_index,
    index_objects,
    should_rebuild,
)

# Cap on matrix cells per distance block; larger tasks process query rows in
# slices so memory stays flat regardless of th_quad.
_BLOCK_CELLS = 1 << 22


def resolve_th_quad(th_quad, k: int) -> int:
    """Leaf capacity: explicit value, or the k-dependent default."""
    if th_quad != "auto":
        return int(th_quad)
    if k < 32:
        return 192
    if k <= 128:
        return 12 * k
    return 2048


@dataclass
class EngineConfig:
    k: int
    region: Rect
    th_quad: int | str = "auto"
    l_max: int = 10
    num_bins: int = 32
    max_refine_iters: int = 64
    rebuild_window: int = 3
    rebuild_factor: float = 1.5
    threads: int = 1
    self_check: bool = False
    audit_pruning: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.num_bins < 2:
            raise ValueError("num_bins must be >= 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.rebuild_window < 1:
            raise ValueError("rebuild_window must be >= 1")
        if self.rebuild_factor <= 0:
            raise ValueError("rebuild_factor must be > 0")
        # Resolve and validate eagerly so a bad value fails before any tick.
        resolve_th_quad(self.th_quad, self.k)


@dataclass
class TickMetrics:
    tick: int
    n_objects: int
    n_queries: int
    iterations_left: int = 0
    iterations_right: int = 0
    distance_evals: int = 0
    pruned_leaves: int = 0
    rebuild_flag: int = 0
    t_build_us: int = 0
    t_index_objects_us: int = 0
    t_index_queries_us: int = 0
    t_first_iteration_us: int = 0
    t_loop_us: int = 0
    t_total_us: int = 0
    active_left: list = field(default_factory=list)
    active_right: list = field(default_factory=list)
    pruning_violations: int = 0
    clamped_objects: int = 0

    CSV_FIELDS = (
        "tick",
        "n_objects",
        "n_queries",
        "iterations_left",
        "iterations_right",
        "distance_evals",
        "pruned_leaves",
        "rebuild_flag",
        "t_build_us",
        "t_index_objects_us",
        "t_index_queries_us",
        "t_first_iteration_us",
        "t_loop_us",
        "t_total_us",
    )

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)

    def csv_row(self) -> str:
        return ",".join(str(getattr(self, f)) for f in self.CSV_FIELDS)


@dataclass
class TickResult:
    """Neighbour lists for one tick, sorted by query id; each query's list is
    sorted by (distance, neighbour id)."""

    query_ids: np.ndarray
    lengths: np.ndarray
    offsets: np.ndarray
    neighbour_ids: np.ndarray
    distances: np.ndarray

    @property
    def n_queries(self) -> int:
        return len(self.query_ids)

    def neighbours(self, i: int):
        s, e = self.offsets[i], self.offsets[i + 1]
        return self.neighbour_ids[s:e], self.distances[s:e]

    def iter_rows(self):
        for i in range(self.n_queries):
            ids, dists = self.neighbours(i)
            yield int(self.query_ids[i]), ids, dists


@dataclass
class QueryStore:
    """One tick's queries sorted by leaf ordinal (input order within a leaf)."""

    issuer: np.ndarray
    x: np.ndarray
    y: np.ndarray
    leaf_ord: np.ndarray

    @property
    def n(self) -> int:
        return len(self.issuer)


@dataclass
class ResultLanes:
    """Flat per-query result lanes: k slots of (neighbour id, squared dist),
    plus the running max and count used for pruning."""

    ids: np.ndarray
    d2: np.ndarray
    maxd2: np.ndarray
    numres: np.ndarray
    k: int

    @classmethod
    def empty(cls, n_queries: int, k: int) -> "ResultLanes":
        return cls(
            ids=np.full(n_queries * k, -1, dtype=np.int64),
            d2=np.full(n_queries * k, np.inf),
            maxd2=np.zeros(n_queries),
            numres=np.zeros(n_queries, dtype=np.int32),
            k=k,
        )

    def ids2d(self) -> np.ndarray:
        return self.ids.reshape(-1, self.k)

    def d2_2d(self) -> np.ndarray:
        return self.d2.reshape(-1, self.k)


def index_queries(issuer, qx, qy, index: QuadIndex):
    """Sort queries by leaf and return the store plus per-leaf runs."""
    issuer = np.asarray(issuer, dtype=np.int64)
    qx = np.asarray(qx, dtype=np.float64)
    qy = np.asarray(qy, dtype=np.float64)
    codes = encode_points(qx, qy, index.mbr, index.l_deep)
    leaf_ord = index.z_map[codes].astype(np.int64)
    order = np.argsort(leaf_ord, kind="stable")
    store = QueryStore(issuer[order], qx[order], qy[order], leaf_ord[order])
    if store.n:
        cuts = np.flatnonzero(np.diff(store.leaf_ord)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [store.n]))
        run_leaf = store.leaf_ord[starts]
    else:
        run_leaf = starts = ends = np.zeros(0, dtype=np.int64)
    return store, (run_leaf, starts, ends)


def write_rows(cand_d2, cand_ids, thresholds, rows, lanes: ResultLanes) -> None:
    """Rewrite result rows with candidates under their thresholds.

    A threshold may admit more than k candidates, but only by ties at the
    largest admitted distance. Every candidate strictly inside that boundary
    must be kept; only boundary ties are trimmed, deterministically by scan
    position. Trimming by scan position alone would be wrong: an interior
    candidate that appears after the tie group in scan order would be lost.
    """
    k = lanes.k
    mask = cand_d2 < thresholds[:, None]
    vmax = np.where(mask, cand_d2, -np.inf).max(axis=1)
    inner = mask & (cand_d2 < vmax[:, None])
    n_inner = inner.sum(axis=1)
    ties = mask & (cand_d2 == vmax[:, None])
    take = inner | (ties & (np.cumsum(ties, axis=1) <= (k - n_inner)[:, None]))
    cum = np.cumsum(take, axis=1)
    take &= cum <= k
    counts = take.sum(axis=1).astype(np.int32)
    maxv = np.where(take, cand_d2, -np.inf).max(axis=1)
    slots = (rows[:, None] * k + np.arange(k)).ravel()
    lanes.ids[slots] = -1
    lanes.d2[slots] = np.inf
    r_idx, c_idx = np.nonzero(take)
    lane_pos = rows[r_idx] * k + (cum[r_idx, c_idx] - 1)
    if cand_ids.ndim == 1:
        taken_ids = cand_ids[c_idx]
    else:
        taken_ids = cand_ids[r_idx, c_idx]
    lanes.ids[lane_pos] = taken_ids
    lanes.d2[lane_pos] = cand_d2[r_idx, c_idx]
    lanes.numres[rows] = counts
    lanes.maxd2[rows] = np.where(counts > 0, maxv, 0.0)


def _plan_packs(no_sorted, extra: int, cells_cap: int = _BLOCK_CELLS):
    """Slice rows (sorted by candidate count ascending) into contiguous packs
    whose padded matrix stays under cells_cap cells. The pad width of a pack
    is its widest row, so sorting first keeps padding waste small."""
    bounds = []
    n = len(no_sorted)
    s = 0
    while s < n:
        if extra + int(no_sorted[s]) > cells_cap:
            e = s + 1  # single oversized row; the matrix is still one row tall
        else:
            lo, hi = s + 1, n
            while lo < hi:  # largest e with (e-s)*(extra+no[e-1]) <= cap
                mid = (lo + hi + 1) // 2
                if (mid - s) * (extra + int(no_sorted[mid - 1])) <= cells_cap:
                    lo = mid
                else:
                    hi = mid - 1
            e = lo
        bounds.append((s, e))
        s = e
    return bounds


def _merge_pack(rows, starts, nos, include_old, qstore, ostore, lanes,
                k, num_bins, max_iters) -> int:
    """Distance + selection + lane rewrite for one padded pack of rows.

    Row i's candidates are objects [starts[i], starts[i]+nos[i]); padding
    slots carry +inf and never qualify. Rows are independent, so batching
    them changes nothing about any row's result.
    """
    out_b = int(nos[-1])
    col = np.arange(out_b, dtype=np.int64)
    validc = col[None, :] < nos[:, None]
    obj_idx = np.where(validc, starts[:, None] + col[None, :], 0)
    ox = ostore.x[obj_idx]
    oy = ostore.y[obj_idx]
    oids = ostore.ids[obj_idx]
    dx = qstore.x[rows][:, None] - ox
    dy = qstore.y[rows][:, None] - oy
    nd2 = dx * dx + dy * dy
    nd2[~validc] = np.inf
    # the issuer's own observation may sit in another leaf after a silent
    # tick (query position vs. carried-forward position), so exclude by id
    nd2[oids == qstore.issuer[rows][:, None]] = np.inf
    evals = int(nos.sum())
    if include_old:
        numres = lanes.numres[rows]
        thr_row = np.where(numres == k, lanes.maxd2[rows], np.inf)
        nd2 = np.where(nd2 < thr_row[:, None], nd2, np.inf)
        changed = (nd2 < np.inf).any(axis=1) | (numres < k)
        if not changed.all():
            rows = rows[changed]
            nd2 = nd2[changed]
            oids = oids[changed]
            numres = numres[changed]
            if rows.size == 0:
                return evals
        valid = np.arange(k)[None, :] < numres[:, None]
        old_d2 = np.where(valid, lanes.d2_2d()[rows], np.inf)
        old_ids = lanes.ids2d()[rows]
        cand_d2 = np.concatenate([old_d2, nd2], axis=1)
        cand_ids = np.concatenate([old_ids, oids], axis=1)
    else:
        cand_d2 = nd2
        cand_ids = oids
    thr, _, _ = select_rows(cand_d2, k, num_bins=num_bins, max_iters=max_iters)
    write_rows(cand_d2, cand_ids, thr, rows, lanes)
    return evals


def _plan_distance_phase(rows_all, starts_all, no_all, include_old, qstore,
                         ostore, lanes, k, num_bins, max_iters):
    """Build pack task closures for one distance phase; heaviest pack first.

    Each closure owns a disjoint row set and returns its evaluation count,
    so closures can run on any number of threads with identical results.
    """
    live = no_all > 0
    if not live.all():
        rows_all = rows_all[live]
        starts_all = starts_all[live]
        no_all = no_all[live]
    if rows_all.size == 0:
        return []
    order = np.argsort(no_all, kind="stable")
    rows_all = rows_all[order]
    starts_all = starts_all[order]
    no_all = no_all[order]
    extra = k if include_old else 0
    fns = [
        (lambda rr=rows_all[s:e], st=starts_all[s:e], no=no_all[s:e]:
         _merge_pack(rr, st, no, include_old, qstore, ostore, lanes,
                     k, num_bins, max_iters))
        for s, e in _plan_packs(no_all, extra)
    ]
    fns.reverse()
    return fns


def first_iteration(run_leaf, starts, ends, qstore, ostore, lanes,
                    k, num_bins, max_iters):
    """Own-leaf pass: every query against the objects of its own leaf.

    Queries in leaves holding at most k candidates take the immediate
    +inf-threshold path inside the selector and copy everything they have.
    Returns task closures for the executor.
    """
    sizes = ends - starts
    rows_all = np.arange(qstore.n, dtype=np.int64)
    starts_row = np.repeat(ostore.cell_start[run_leaf], sizes)
    no_row = np.repeat(
        ostore.cell_end[run_leaf] - ostore.cell_start[run_leaf], sizes
    )
    return _plan_distance_phase(
        rows_all, starts_row, no_row, False, qstore, ostore, lanes,
        k, num_bins, max_iters,
    )


def update_nn_lists(run_leaf, run_starts, run_ends, refs2, qstore, ostore,
                    lanes, k, num_bins, max_iters):
    """Merge each query's assigned leaf into its current list.

    Candidates are the union of the existing lane entries and the leaf's
    objects under the pruning threshold (MAXDIST when the list is full);
    a fresh bucket selection over the union rewrites the lane. Returns task
    closures for the executor.
    """
    sizes = run_ends - run_starts
    starts_row = np.repeat(ostore.cell_start[run_leaf], sizes)
    no_row = np.repeat(
        ostore.cell_end[run_leaf] - ostore.cell_start[run_leaf], sizes
    )
    return _plan_distance_phase(
        refs2, starts_row, no_row, True, qstore, ostore, lanes,
        k, num_bins, max_iters,
    )


def navigate(direction, refs, cursor, index: QuadIndex, ostore: ObjectStore,
             qstore: QueryStore, lanes: ResultLanes, audit=None):
    """Advance every referenced query one leaf in the given direction.

    The walk happens on the virtual full quadtree: at each step the query
    stands on the coarsest quadrant aligned with its cursor, prunes it
    outright when its cell cannot contain anything closer than the current
    k-th distance, descends one level when it might, and resolves the leaf
    through z_map only at the deepest level. Queries with fewer than k
    results never prune and jump straight to leaf resolution.

    Returns (assigned leaf per ref, -1 when the direction is exhausted,
    prune events). Cursor entries update in place.
    """
    sign = 1 if direction == "right" else -1
    l_deep = index.l_deep
    n_codes = np.int64(4) ** l_deep
    k = lanes.k
    pos = cursor[refs].copy()
    thr = np.where(lanes.numres[refs] >= k, lanes.maxd2[refs], np.inf)
    assigned = np.full(refs.size, -1, dtype=np.int64)
    pruned = 0
    if refs.size == 0:
        return assigned, pruned

    def coarsest_levels(p):
        # Right cursors align on the quadrant's first code, left cursors on
        # its last, hence the +1 before counting trailing zero bit-pairs.
        a = p + (1 - sign) // 2
        out = np.empty(p.size, dtype=np.int64)
        nz = a != 0
        lsb = a[nz] & -a[nz]
        tz2 = np.log2(lsb.astype(np.float64)).astype(np.int64) >> 1
        out[nz] = l_deep - np.minimum(tz2, l_deep)
        out[~nz] = 0
        return out

    in_rng = (pos < n_codes) if sign == 1 else (pos >= 0)
    w_rows = np.flatnonzero(in_rng)
    w_pos = pos[w_rows]
    w_lvl = coarsest_levels(w_pos)
    w_lvl[np.isinf(thr[w_rows])] = l_deep
    mbr = index.mbr

    while w_rows.size:
        delta = l_deep - w_lvl
        qc = w_pos >> (2 * delta)
        xl, yl, xh, yh = cell_bounds_arrays(w_lvl, qc, mbr)
        rr = refs[w_rows]
        d2 = min_dist2_point_cells(qstore.x[rr], qstore.y[rr], xl, yl, xh, yh)
        w_thr = thr[w_rows]
        passed = d2 < w_thr
        at_leaf = w_lvl == l_deep
        moved = np.zeros(w_rows.size, dtype=bool)

        fail = ~passed
        if fail.any():
            pruned += int(fail.sum())
            if audit is not None:
                audit.append(
                    (rr[fail].copy(), w_lvl[fail].copy(), qc[fail].copy(),
                     w_thr[fail].copy())
                )
            w_pos[fail] += sign * (np.int64(1) << (2 * delta[fail]))
            moved |= fail

        desc = passed & ~at_leaf
        # The child sharing the cursor's code is the first child for right
        # walks and the last for left walks; either way pos stays put.
        w_lvl[desc] += 1

        hit = passed & at_leaf
        if hit.any():
            hit_idx = np.flatnonzero(hit)
            li = index.z_map[w_pos[hit_idx]].astype(np.int64)
            occ = ostore.cell_end[li] > ostore.cell_start[li]
            if (~occ).any():
                e_i = hit_idx[~occ]
                le = li[~occ]
                if sign == 1:
                    w_pos[e_i] = index.leaf_key[le] + index.leaf_span[le]
                else:
                    w_pos[e_i] = index.leaf_key[le] - 1
                moved[e_i] = True
            if occ.any():
                a_i = hit_idx[occ]
                la = li[occ]
                assigned[w_rows[a_i]] = la
                if sign == 1:
                    cursor[refs[w_rows[a_i]]] = index.leaf_key[la] + index.leaf_span[la]
                else:
                    cursor[refs[w_rows[a_i]]] = index.leaf_key[la] - 1

        keep = assigned[w_rows] < 0
        in_rng = (w_pos < n_codes) if sign == 1 else (w_pos >= 0)
        exhausted = keep & ~in_rng
        if exhausted.any():
            cursor[refs[w_rows[exhausted]]] = w_pos[exhausted]
        keep &= in_rng
        recompute = moved & keep
        if recompute.any():
            lv = coarsest_levels(w_pos[recompute])
            lv[np.isinf(thr[w_rows[recompute]])] = l_deep
            w_lvl[recompute] = lv
        w_rows = w_rows[keep]
        w_pos = w_pos[keep]
        w_lvl = w_lvl[keep]
    return assigned, pruned


def sort_and_materialize(refs, assigned):
    """Drop exhausted refs, stably regroup survivors by assigned leaf.

    Returns (refs in new order, run leaf ordinals, run starts, run ends).
    The new order is carried into the next same-direction iteration, so
    queries whose walks converge on the same leaves stay batched.
    """
    got = assigned >= 0
    refs2 = refs[got]
    leaves = assigned[got]
    order = np.argsort(leaves, kind="stable")
    refs2 = refs2[order]
    leaves = leaves[order]
    if leaves.size:
        cuts = np.flatnonzero(np.diff(leaves)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [leaves.size]))
        run_leaf = leaves[starts]
    else:
        run_leaf = starts = ends = np.zeros(0, dtype=np.int64)
    return refs2, run_leaf, starts, ends


def _audit_prune_events(events, ostore: ObjectStore, qstore: QueryStore,
                        index: QuadIndex) -> int:
    """Recheck every pruned quadrant against the objects it actually held.

    A violation is an object inside a pruned quadrant strictly closer than
    the threshold used for the prune (excluding the issuer itself).
    """
    violations = 0
    for rows, lvls, codes, thrs in events:
        for i in range(len(rows)):
            delta = int(index.l_deep - lvls[i])
            lo = int(codes[i]) << (2 * delta)
            hi = (int(codes[i]) + 1) << (2 * delta)
            s = np.searchsorted(ostore.codes, lo, side="left")
            e = np.searchsorted(ostore.codes, hi, side="left")
            if s == e:
                continue
            r = int(rows[i])
            d2 = squared_dist_matrix(
                qstore.x[r : r + 1], qstore.y[r : r + 1],
                ostore.x[s:e], ostore.y[s:e],
            )[0]
            d2[ostore.ids[s:e] == qstore.issuer[r]] = np.inf
            if (d2 < thrs[i]).any():
                violations += 1
    return violations


class Engine:
    """Stateful tick processor: owns the index, the rebuild history and the
    worker pool. Feed it one deduplicated batch per tick."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.th_quad = resolve_th_quad(config.th_quad, config.k)
        self._index: QuadIndex | None = None
        self._history: list[int] = []
        self._tick = 0
        self._pool: ThreadPoolExecutor | None = None
        self.last_metrics: TickMetrics | None = None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass

    @property
    def index(self) -> QuadIndex | None:
        return self._index

    def _execute(self, fns) -> int:
        threads = self.config.threads
        if threads <= 1 or len(fns) <= 1:
            return sum(fn() for fn in fns)
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=threads)
        parts = [fns[i::threads] for i in range(threads)]
        totals = self._pool.map(lambda part: sum(fn() for fn in part), parts)
        return sum(totals)

    def process_tick(self, ids, x, y, q_issuer, qx, qy) -> TickResult:
        cfg = self.config
        k = cfg.k
        t0 = time.perf_counter_ns()
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        q_issuer = np.ascontiguousarray(q_issuer, dtype=np.int64)
        qx = np.ascontiguousarray(qx, dtype=np.float64)
        qy = np.ascontiguousarray(qy, dtype=np.float64)
        if cfg.self_check and len(ids) != len(np.unique(ids)):
            raise ValueError("duplicate object ids in tick batch")

        metrics = TickMetrics(tick=self._tick, n_objects=len(ids), n_queries=len(q_issuer))
        rebuild = self._index is None or should_rebuild(
            self._history, window=cfg.rebuild_window, factor=cfg.rebuild_factor
        )
        if rebuild:
            self._index = build_index(x, y, cfg.region, self.th_quad, cfg.l_max)
            if cfg.self_check:
                self._index.validate()
            metrics.rebuild_flag = 1
        index = self._index
        t1 = time.perf_counter_ns()
        metrics.t_build_us = (t1 - t0) // 1000

        ostore = index_objects(ids, x, y, index)
        metrics.clamped_objects = ostore.clamped
        t2 = time.perf_counter_ns()
        metrics.t_index_objects_us = (t2 - t1) // 1000

        qstore, (run_leaf, starts, ends) = index_queries(q_issuer, qx, qy, index)
        lanes = ResultLanes.empty(qstore.n, k)
        t3 = time.perf_counter_ns()
        metrics.t_index_queries_us = (t3 - t2) // 1000

        evals = self._execute(first_iteration(
            run_leaf, starts, ends, qstore, ostore, lanes,
            k, cfg.num_bins, cfg.max_refine_iters,
        ))
        t4 = time.perf_counter_ns()
        metrics.t_first_iteration_us = (t4 - t3) // 1000

        audit: list | None = [] if cfg.audit_pruning else None
        if qstore.n:
            own = qstore.leaf_ord
            cur_left = index.leaf_key[own] - 1
            cur_right = index.leaf_key[own] + index.leaf_span[own]
            refs_left = np.arange(qstore.n, dtype=np.int64)
            refs_right = refs_left.copy()
            direction = "left"
            while refs_left.size or refs_right.size:
                if direction == "left":
                    refs, cursor = refs_left, cur_left
                else:
                    refs, cursor = refs_right, cur_right
                if refs.size == 0:
                    direction = "right" if direction == "left" else "left"
                    continue
                if direction == "left":
                    metrics.active_left.append(int(refs.size))
                else:
                    metrics.active_right.append(int(refs.size))
                assigned, pruned = navigate(
                    direction, refs, cursor, index, ostore, qstore, lanes, audit
                )
                metrics.pruned_leaves += pruned
                refs2, r_leaf, r_s, r_e = sort_and_materialize(refs, assigned)
                if r_leaf.size:
                    evals += self._execute(update_nn_lists(
                        r_leaf, r_s, r_e, refs2, qstore, ostore, lanes,
                        k, cfg.num_bins, cfg.max_refine_iters,
                    ))
                if direction == "left":
                    refs_left = refs2
                    metrics.iterations_left += 1
                    direction = "right"
                else:
                    refs_right = refs2
                    metrics.iterations_right += 1
                    direction = "left"
        t5 = time.perf_counter_ns()
        metrics.t_loop_us = (t5 - t4) // 1000
        metrics.distance_evals = int(evals)

        if audit:
            metrics.pruning_violations = _audit_prune_events(
                audit, ostore, qstore, index
            )

        result = _emit(qstore, lanes)
        self._history.append(int(evals))
        self._tick += 1
        metrics.t_total_us = (time.perf_counter_ns() - t0) // 1000
        self.last_metrics = metrics
        return result

    def process_batch(self, batch) -> TickResult:
        return self.process_tick(
            batch.ids, batch.x, batch.y, batch.q_issuer, batch.qx, batch.qy
        )


def _emit(qstore: QueryStore, lanes: ResultLanes) -> TickResult:
    n_q, k = qstore.n, lanes.k
    dist = np.sqrt(lanes.d2_2d())
    ids2 = lanes.ids2d()
    rowg = np.broadcast_to(np.arange(n_q)[:, None], (n_q, k))
    # Row-wise sort by (distance, id); padding slots carry +inf and sink.
    perm = np.lexsort((ids2.ravel(), dist.ravel(), rowg.ravel()))
    dist_s = dist.ravel()[perm].reshape(n_q, k)
    ids_s = ids2.ravel()[perm].reshape(n_q, k)
    qorder = np.argsort(qstore.issuer, kind="stable")
    lengths = lanes.numres[qorder].astype(np.int32)
    valid = np.arange(k)[None, :] < lengths[:, None]
    offsets = np.concatenate(([0], np.cumsum(lengths, dtype=np.int64)))
    return TickResult(
        query_ids=qstore.issuer[qorder].copy(),
        lengths=lengths,
        offsets=offsets,
        neighbour_ids=ids_s[qorder][valid],
        distances=dist_s[qorder][valid],
    )
