"""Bucket-based k-selection over candidate distances.

The selector never sorts the full candidate set: it histograms candidates
into equal-width bins over the current [lo, hi] range, keeps the bin where
the running count reaches k, and repeats inside that bin. It terminates with
a threshold T such that count(d < T) == k when the bin count lands exactly,
or T just above the k-th value when a tie group straddles rank k (the caller
caps writes at k). Works in any monotone distance space; callers choose
plain or squared values consistently.

Reason codes returned per row:
  FEW      at most k finite candidates, threshold is +inf
  COUNT    bin count matched k exactly
  TIE      the range collapsed to one repeated value
  FALLBACK max_iters exhausted, threshold from sorting the surviving bin
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Point, squared_dist_matrix

REASON_FEW = 0
REASON_COUNT = 1
REASON_TIE = 2
REASON_FALLBACK = 3

REASON_NAMES = {0: "few", 1: "count", 2: "tie", 3: "fallback"}


def select_rows(values, k: int, num_bins: int = 32, max_iters: int = 64):
    """Per-row selection thresholds for a (rows, candidates) value matrix.

    Excluded candidates are marked +inf. Returns (thresholds, iterations,
    reasons); iterations counts histogram passes per row.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if num_bins < 2:
        raise ValueError(f"num_bins must be >= 2, got {num_bins}")
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("values must be 2-D (rows x candidates)")
    n_rows = v.shape[0]
    thresholds = np.full(n_rows, np.inf)
    iterations = np.zeros(n_rows, dtype=np.int32)
    reasons = np.full(n_rows, REASON_FEW, dtype=np.int8)
    finite = v < np.inf
    nvalid = finite.sum(axis=1)
    rows = np.flatnonzero(nvalid > k)
    if rows.size == 0:
        return thresholds, iterations, reasons

    sub = v[rows]
    fin = finite[rows]
    lo = np.where(fin, sub, np.inf).min(axis=1)
    hi = np.where(fin, sub, -np.inf).max(axis=1)
    base = np.zeros(rows.size, dtype=np.int64)  # candidates known below lo
    upper = np.full(rows.size, np.inf)  # smallest value known above hi
    out = np.empty(rows.size)
    reas = np.empty(rows.size, dtype=np.int8)
    iters = np.zeros(rows.size, dtype=np.int32)
    alive = np.ones(rows.size, dtype=bool)

    for _ in range(max_iters):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        # Range collapsed: every survivor is tied at lo; T approaches the tie
        # value from above and the caller keeps the first k.
        tied = lo[act] == hi[act]
        if tied.any():
            t = act[tied]
            out[t] = np.nextafter(hi[t], np.inf)
            reas[t] = REASON_TIE
            alive[t] = False
            act = act[~tied]
            if act.size == 0:
                continue
        iters[act] += 1
        block = sub[act]
        L = lo[act]
        H = hi[act]
        width = (H - L) / num_bins
        in_range = (block >= L[:, None]) & (block <= H[:, None])
        # Binning is monotone in the value, so equal values share a bin and
        # the kept bin's values are a contiguous value range.
        raw = (block - L[:, None]) / width[:, None]
        bins = np.clip(np.floor(raw), 0, num_bins - 1)
        bins = np.where(in_range, bins, 0.0).astype(np.int64)
        lin = np.arange(act.size)[:, None] * num_bins + bins
        hist = np.bincount(
            lin[in_range], minlength=act.size * num_bins
        ).reshape(act.size, num_bins)
        cum = np.cumsum(hist, axis=1)
        need = k - base[act]
        bstar = np.argmax(cum >= need[:, None], axis=1)
        ar = np.arange(act.size)
        in_bin = hist[ar, bstar]
        below = cum[ar, bstar] - in_bin
        sel = in_range & (bins == bstar[:, None])
        new_lo = np.where(sel, block, np.inf).min(axis=1)
        new_hi = np.where(sel, block, -np.inf).max(axis=1)
        above = in_range & (bins > bstar[:, None])
        upper[act] = np.minimum(
            upper[act], np.where(above, block, np.inf).min(axis=1)
        )
        base[act] += below
        done = base[act] + in_bin == k
        if done.any():
            d = act[done]
            # Prefer the arithmetic bin edge as the threshold; it is valid
            # only if no candidate sits in [edge, upper) half-open gap.
            edge = L[done] + (bstar[done] + 1) * width[done]
            cap = new_hi[done]
            ok = (edge > cap) & (edge <= upper[d])
            out[d] = np.where(ok, edge, np.nextafter(cap, np.inf))
            reas[d] = REASON_COUNT
            alive[d] = False
        lo[act] = new_lo
        hi[act] = new_hi

    # max_iters exhausted: sort what survives in [lo, hi] and step past the
    # missing rank. Rare; bounded work because the range only ever shrinks.
    for j in np.flatnonzero(alive):
        vals = sub[j]
        vals = np.sort(vals[(vals >= lo[j]) & (vals <= hi[j])])
        kth = vals[k - base[j] - 1]
        out[j] = np.nextafter(kth, np.inf)
        reas[j] = REASON_FALLBACK

    thresholds[rows] = out
    iterations[rows] = iters
    reasons[rows] = reas
    return thresholds, iterations, reasons


@dataclass(frozen=True)
class KSelectOutcome:
    threshold: float
    iterations: int
    reason: str


def find_min_max_dist(q: Point, ox, oy, oids=None, exclude_id=None):
    """Distance range from a query point to a candidate set.

    Distances are Euclidean; the issuer's own observation is excluded when
    (oids, exclude_id) identify it. Raises on an empty candidate set.
    """
    d = np.sqrt(squared_dist_matrix([q.x], [q.y], ox, oy)[0])
    if exclude_id is not None and oids is not None:
        d = d[np.asarray(oids) != exclude_id]
    if d.size == 0:
        raise ValueError("no candidates after exclusion")
    return float(d.min()), float(d.max())


def find_k_dist(
    q: Point,
    ox,
    oy,
    k: int,
    num_bins: int = 32,
    max_iters: int = 64,
    oids=None,
    exclude_id=None,
) -> float:
    """Scalar k-th distance threshold for one query point.

    Returns +inf immediately when at most k candidates remain, so the caller
    copies everything it has.
    """
    return find_k_dist_detail(
        q, ox, oy, k, num_bins=num_bins, max_iters=max_iters, oids=oids,
        exclude_id=exclude_id,
    ).threshold


def find_k_dist_detail(
    q: Point,
    ox,
    oy,
    k: int,
    num_bins: int = 32,
    max_iters: int = 64,
    oids=None,
    exclude_id=None,
) -> KSelectOutcome:
    d = np.sqrt(squared_dist_matrix([q.x], [q.y], ox, oy)[0])
    if exclude_id is not None and oids is not None:
        d = np.where(np.asarray(oids) == exclude_id, np.inf, d)
    t, it, reason = select_rows(d[None, :], k, num_bins=num_bins, max_iters=max_iters)
    return KSelectOutcome(float(t[0]), int(it[0]), REASON_NAMES[int(reason[0])])


def scan_copy_under(q: Point, ox, oy, oids, threshold: float, k: int, exclude_id=None):
    """Sequential copy of candidates with dist < threshold, capped at k.

    The threshold may admit more than k candidates, but only through ties at
    the largest admitted distance; every strictly closer candidate is always
    copied, and only boundary ties are trimmed, in scan order. Returns
    (ids, dists, maxdist) in scan order; maxdist is 0.0 when nothing
    qualifies.
    """
    d = np.sqrt(squared_dist_matrix([q.x], [q.y], ox, oy)[0])
    oids = np.asarray(oids, dtype=np.int64)
    admit = d < threshold
    if exclude_id is not None:
        admit &= oids != exclude_id
    if admit.any():
        vmax = d[admit].max()
        ties = admit & (d == vmax)
        take = admit & (d < vmax)
        n_inner = int(take.sum())
        take |= ties & (np.cumsum(ties) <= k - n_inner)
        take &= np.cumsum(take) <= k
    else:
        take = admit
    ids = oids[take]
    dists = d[take]
    maxdist = float(dists.max()) if len(dists) else 0.0
    return ids, dists, maxdist
