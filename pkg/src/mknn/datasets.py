"""Dataset file format and tick ingestion.

Format: a header block of `# key = value` lines echoing the generating spec,
then one line per event. Position updates are `tick,object_id,x,y` and
queries are `tick,issuer_id,x,y,k`. Lines may arrive in any order within a
tick; the ingestion layer keeps only each object's last update and last query
per tick and carries last-known positions forward through silent ticks, so
the engine always sees the full snapshot of last-known positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .workload import TickBatch, WorkloadSpec

FORMAT_TAG = "mknn-dataset v1"


@dataclass
class DatasetError(Exception):
    message: str
    line_no: int | None = None

    def __str__(self) -> str:
        if self.line_no is None:
            return self.message
        return f"line {self.line_no}: {self.message}"


def write_dataset(path: str, spec: WorkloadSpec, batches) -> None:
    """Write batches in the dataset format with a spec-echo header."""
    with open(path, "w") as f:
        f.write(f"# {FORMAT_TAG}\n")
        f.write(f"# n_objects = {spec.n_objects}\n")
        f.write(f"# distribution = {spec.distribution}\n")
        if spec.distribution == "gaussian":
            f.write(f"# hotspots = {spec.hotspots}\n")
            f.write(f"# sigma = {float(spec.sigma)!r}\n")
        f.write(f"# region_side = {float(spec.region.width)!r}\n")
        f.write(f"# max_speed = {float(spec.max_speed)!r}\n")
        f.write(f"# ticks = {spec.ticks}\n")
        f.write(f"# query_rate = {float(spec.query_rate)!r}\n")
        f.write(f"# k = {spec.k}\n")
        f.write(f"# seed = {spec.seed}\n")
        for b in batches:
            # plain-float repr keeps the exact bits and reads back with float()
            for i in range(len(b.ids)):
                f.write(f"{b.tick},{b.ids[i]},{float(b.x[i])!r},{float(b.y[i])!r}\n")
            for i in range(len(b.q_issuer)):
                f.write(
                    f"{b.tick},{b.q_issuer[i]},{float(b.qx[i])!r},{float(b.qy[i])!r},{b.k}\n"
                )


def read_dataset(path: str):
    """Parse a dataset file into (header dict, position rows, query rows).

    Rows come back as plain lists of tuples in file order; ingest() applies
    the dedup and carry-forward semantics. Malformed lines raise DatasetError
    with the 1-based line number.
    """
    header: dict[str, str] = {}
    positions: list[tuple] = []
    queries: list[tuple] = []
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    header[key.strip()] = val.strip()
                continue
            parts = line.split(",")
            try:
                if len(parts) == 4:
                    tick = int(parts[0])
                    oid = int(parts[1])
                    x = float(parts[2])
                    y = float(parts[3])
                    if not (np.isfinite(x) and np.isfinite(y)):
                        raise ValueError("non-finite coordinate")
                    positions.append((tick, oid, x, y, line_no))
                elif len(parts) == 5:
                    tick = int(parts[0])
                    oid = int(parts[1])
                    x = float(parts[2])
                    y = float(parts[3])
                    k = int(parts[4])
                    if not (np.isfinite(x) and np.isfinite(y)):
                        raise ValueError("non-finite coordinate")
                    if k < 1:
                        raise ValueError(f"k must be >= 1, got {k}")
                    queries.append((tick, oid, x, y, k, line_no))
                else:
                    raise ValueError(f"expected 4 or 5 fields, got {len(parts)}")
            except ValueError as e:
                raise DatasetError(str(e), line_no) from None
            if tick < 0:
                raise DatasetError(f"negative tick {tick}", line_no)
    return header, positions, queries


def ingest(path: str) -> list[TickBatch]:
    """Read a dataset file and produce per-tick deduplicated batches.

    Within a tick the last update per object and the last query per issuer
    win. Every batch carries the full set of last-known positions (objects
    silent this tick keep their previous coordinates). A query from an id
    never seen as an object up to that tick is an error.
    """
    header, positions, queries = read_dataset(path)
    n_ticks = 0
    if "ticks" in header:
        try:
            n_ticks = int(header["ticks"])
        except ValueError:
            raise DatasetError(f"bad ticks header value {header['ticks']!r}")
    last_tick = max(
        [t for t, *_ in positions] + [t for t, *_ in queries], default=-1
    )
    n_ticks = max(n_ticks, last_tick + 1)

    by_tick_pos: dict[int, dict[int, tuple]] = {}
    for tick, oid, x, y, line_no in positions:
        by_tick_pos.setdefault(tick, {})[oid] = (x, y)
    by_tick_q: dict[int, dict[int, tuple]] = {}
    for tick, oid, x, y, k, line_no in queries:
        by_tick_q.setdefault(tick, {})[oid] = (x, y, k, line_no)

    known: dict[int, tuple] = {}  # last-known positions, carried forward
    batches: list[TickBatch] = []
    for tick in range(n_ticks):
        known.update(by_tick_pos.get(tick, {}))
        qmap = by_tick_q.get(tick, {})
        for qid, (_, _, _, line_no) in qmap.items():
            if qid not in known:
                raise DatasetError(
                    f"query from unknown object id {qid} at tick {tick}", line_no
                )
        ids = np.fromiter(known.keys(), dtype=np.int64, count=len(known))
        xs = np.fromiter((v[0] for v in known.values()), dtype=np.float64, count=len(known))
        ys = np.fromiter((v[1] for v in known.values()), dtype=np.float64, count=len(known))
        q_ids = np.fromiter(qmap.keys(), dtype=np.int64, count=len(qmap))
        q_x = np.fromiter((v[0] for v in qmap.values()), dtype=np.float64, count=len(qmap))
        q_y = np.fromiter((v[1] for v in qmap.values()), dtype=np.float64, count=len(qmap))
        ks = {v[2] for v in qmap.values()}
        if len(ks) > 1:
            raise DatasetError(
                f"tick {tick} mixes k values {sorted(ks)}; one k per tick is supported"
            )
        k = ks.pop() if ks else 0
        batches.append(
            TickBatch(
                tick=tick, ids=ids, x=xs, y=ys,
                q_issuer=q_ids, qx=q_x, qy=q_y, k=k,
            )
        )
    return batches
