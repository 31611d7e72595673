"""Brute-force k-NN reference and result comparison.

The oracle evaluates every query against every object with the same squared
distance expression the engine uses, so matching results match bit for bit.
Ties at equal distance are broken by ascending neighbour id, which makes the
oracle's output canonical; the comparison then accepts engine lists whose ids
differ only inside the boundary-distance tie group (any subset of a tie group
is a valid k-NN answer).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import squared_dist_matrix

_BLOCK_CELLS = 1 << 22


@dataclass
class OracleResult:
    """Per-query canonical k-NN lists, sorted by query id."""

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


def brute_force_knn(ids, x, y, q_issuer, qx, qy, k: int) -> OracleResult:
    """Exact k-NN for every query by full scan, O(|P|·|Q|) distances.

    Self-exclusion matches the engine: any object whose id equals the
    query's issuer id is skipped. Output is canonical (ties by ascending id)
    and sorted by query id.
    """
    ids = np.asarray(ids, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    q_issuer = np.asarray(q_issuer, dtype=np.int64)
    qx = np.asarray(qx, dtype=np.float64)
    qy = np.asarray(qy, dtype=np.float64)
    n = len(ids)
    n_q = len(q_issuer)
    qorder = np.argsort(q_issuer, kind="stable")
    kk = min(k, n)

    out_ids = []
    out_d = []
    lengths = np.zeros(n_q, dtype=np.int32)
    step = max(1, _BLOCK_CELLS // max(1, n))
    for s in range(0, n_q, step):
        rows = qorder[s : s + step]
        d2 = squared_dist_matrix(qx[rows], qy[rows], x, y)
        d2[q_issuer[rows][:, None] == ids[None, :]] = np.inf
        if kk and kk < n:
            part = np.argpartition(d2, kk - 1, axis=1)[:, :kk]
        else:
            part = np.broadcast_to(np.arange(n), (len(rows), n))
        rr = np.arange(len(rows))[:, None]
        dp = d2[rr, part]
        ip = ids[part]
        # canonical within-row order: (distance, id); excluded entries are
        # +inf and sink past every real candidate
        rowg = np.broadcast_to(np.arange(len(rows))[:, None], dp.shape)
        perm = np.lexsort((ip.ravel(), dp.ravel(), rowg.ravel()))
        dp = dp.ravel()[perm].reshape(dp.shape)
        ip = ip.ravel()[perm].reshape(ip.shape)
        if kk and kk < n:
            # the partition cut is arbitrary inside a tie group at the k-th
            # distance; rows whose boundary group extends past the cut are
            # re-sorted in full so the lowest tied ids win canonically
            vmax = dp[:, kk - 1]
            n_at = (d2 == vmax[:, None]).sum(axis=1)
            kept_at = (dp == vmax[:, None]).sum(axis=1)
            for j in np.flatnonzero(np.isfinite(vmax) & (n_at > kept_at)):
                order = np.lexsort((ids, d2[j]))[:kk]
                dp[j] = d2[j][order]
                ip[j] = ids[order]
        valid = np.isfinite(dp)
        cnt = valid.sum(axis=1).astype(np.int32)
        lengths[s : s + len(rows)] = cnt
        out_ids.append(ip[valid])
        out_d.append(np.sqrt(dp[valid]))

    flat_ids = np.concatenate(out_ids) if out_ids else np.zeros(0, dtype=np.int64)
    flat_d = np.concatenate(out_d) if out_d else np.zeros(0)
    offsets = np.concatenate(([0], np.cumsum(lengths, dtype=np.int64)))
    return OracleResult(
        query_ids=q_issuer[qorder].copy(),
        lengths=lengths,
        offsets=offsets,
        neighbour_ids=flat_ids,
        distances=flat_d,
    )


VERDICT_EXACT = "exact"
VERDICT_TIE = "tie-equivalent"
VERDICT_MISMATCH = "mismatch"


@dataclass
class CompareReport:
    query_ids: np.ndarray
    verdicts: list[str]
    engine_maxdist: np.ndarray
    oracle_maxdist: np.ndarray

    @property
    def counts(self) -> dict:
        out = {VERDICT_EXACT: 0, VERDICT_TIE: 0, VERDICT_MISMATCH: 0}
        for v in self.verdicts:
            out[v] += 1
        return out

    @property
    def ok(self) -> bool:
        return self.counts[VERDICT_MISMATCH] == 0

    def to_csv(self) -> str:
        lines = ["query_id,verdict,engine_maxdist,oracle_maxdist"]
        for i, qid in enumerate(self.query_ids):
            lines.append(
                f"{qid},{self.verdicts[i]},{self.engine_maxdist[i]:.9g},"
                f"{self.oracle_maxdist[i]:.9g}"
            )
        return "\n".join(lines) + "\n"


def compare_results(engine_res, oracle_res, positions=None) -> CompareReport:
    """Per-query verdicts: exact | tie-equivalent | mismatch.

    Both inputs must cover the same query ids (anything else is a mismatch).
    A tie-equivalent verdict requires equal distance multisets with id
    differences confined to the boundary distance (the last, largest one);
    when ``positions`` (ids, x, y, issuer lookup) is given, the engine's
    boundary ids are additionally verified to really sit at that distance.
    """
    e_ids = {int(q): i for i, q in enumerate(engine_res.query_ids)}
    verdicts = []
    emax = np.zeros(oracle_res.n_queries)
    omax = np.zeros(oracle_res.n_queries)
    pos_lookup = None
    if positions is not None:
        p_ids, p_x, p_y = positions
        pos_lookup = {int(a): (float(b), float(c)) for a, b, c in zip(p_ids, p_x, p_y)}

    for i in range(oracle_res.n_queries):
        qid = int(oracle_res.query_ids[i])
        o_ids, o_d = oracle_res.neighbours(i)
        omax[i] = o_d[-1] if len(o_d) else 0.0
        j = e_ids.get(qid)
        if j is None:
            verdicts.append(VERDICT_MISMATCH)
            continue
        g_ids, g_d = engine_res.neighbours(j)
        emax[i] = g_d[-1] if len(g_d) else 0.0
        if len(g_d) != len(o_d) or not np.array_equal(g_d, o_d):
            verdicts.append(VERDICT_MISMATCH)
            continue
        if np.array_equal(g_ids, o_ids):
            verdicts.append(VERDICT_EXACT)
            continue
        # distances agree; ids may legally differ only at the boundary value
        boundary = o_d[-1]
        inner = o_d < boundary
        if not np.array_equal(g_ids[inner], o_ids[inner]):
            verdicts.append(VERDICT_MISMATCH)
            continue
        if pos_lookup is not None:
            ok = True
            qx, qy = pos_lookup[qid]
            for nid, nd in zip(g_ids[~inner], g_d[~inner]):
                px, py = pos_lookup[int(nid)]
                dx, dy = qx - px, qy - py
                if np.sqrt(dx * dx + dy * dy) != nd or int(nid) == qid:
                    ok = False
                    break
            if not ok:
                verdicts.append(VERDICT_MISMATCH)
                continue
        verdicts.append(VERDICT_TIE)
    return CompareReport(
        query_ids=oracle_res.query_ids.copy(),
        verdicts=verdicts,
        engine_maxdist=emax,
        oracle_maxdist=omax,
    )
