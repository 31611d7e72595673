"""HTTP service: engine sessions over REST.

A session owns one Engine (and so one index and rebuild history); clients
push one tick batch at a time and get the neighbour lists plus the tick's
metrics back. Ticks within a session are serialized with a per-session lock
because the engine is single-writer; separate sessions run independently.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException

from ..engine import Engine, EngineConfig, TickResult
from ..geometry import Rect
from ..oracle import brute_force_knn
from .schemas import (
    EngineSettings,
    NeighbourOut,
    OracleRequest,
    OracleResponse,
    QueryResultOut,
    SessionInfo,
    TickMetricsOut,
    TickRequest,
    TickResponse,
)


class _Session:
    def __init__(self, settings: EngineSettings):
        self.settings = settings
        self.engine = Engine(
            EngineConfig(
                k=settings.k,
                region=Rect.square(settings.region_side),
                th_quad=settings.th_quad,
                l_max=settings.l_max,
                num_bins=settings.num_bins,
                max_refine_iters=settings.max_refine_iters,
                rebuild_window=settings.rebuild_window,
                rebuild_factor=settings.rebuild_factor,
                threads=settings.threads,
            )
        )
        self.ticks = 0
        self.lock = threading.Lock()


def _result_payload(result: TickResult) -> list[QueryResultOut]:
    out = []
    for qid, ids, dists in result.iter_rows():
        out.append(
            QueryResultOut(
                query_id=qid,
                neighbours=[
                    NeighbourOut(id=int(i), distance=float(d))
                    for i, d in zip(ids, dists)
                ],
            )
        )
    return out


def create_app() -> FastAPI:
    app = FastAPI(title="mknn", description="batched k-NN over moving objects")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def _get(session_id: str) -> _Session:
        with registry_lock:
            s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return s

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(settings: EngineSettings):
        session = _Session(settings)
        sid = uuid.uuid4().hex[:12]
        with registry_lock:
            sessions[sid] = session
        return SessionInfo(session_id=sid, ticks_processed=0, settings=settings)

    @app.get("/sessions", response_model=list[SessionInfo])
    def list_sessions():
        with registry_lock:
            items = list(sessions.items())
        return [
            SessionInfo(session_id=sid, ticks_processed=s.ticks, settings=s.settings)
            for sid, s in items
        ]

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def get_session(session_id: str):
        s = _get(session_id)
        return SessionInfo(
            session_id=session_id, ticks_processed=s.ticks, settings=s.settings
        )

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with registry_lock:
            s = sessions.pop(session_id, None)
        if s is None:
            raise HTTPException(status_code=404, detail="unknown session")
        s.engine.close()

    @app.post("/sessions/{session_id}/tick", response_model=TickResponse)
    def process_tick(session_id: str, req: TickRequest):
        s = _get(session_id)
        ids = np.array([p.id for p in req.positions], dtype=np.int64)
        if len(ids) != len(np.unique(ids)):
            raise HTTPException(status_code=422, detail="duplicate object ids")
        qi = [q.issuer_id for q in req.queries]
        if len(qi) != len(set(qi)):
            raise HTTPException(status_code=422, detail="duplicate query issuers")
        x = np.array([p.x for p in req.positions])
        y = np.array([p.y for p in req.positions])
        qx = np.array([q.x for q in req.queries])
        qy = np.array([q.y for q in req.queries])
        with s.lock:
            result = s.engine.process_tick(ids, x, y, np.array(qi, dtype=np.int64), qx, qy)
            metrics = s.engine.last_metrics
            s.ticks += 1
        m = TickMetricsOut(
            **{f: getattr(metrics, f) for f in TickMetricsOut.model_fields}
        )
        return TickResponse(tick=m.tick, results=_result_payload(result), metrics=m)

    @app.post("/oracle", response_model=OracleResponse)
    def oracle(req: OracleRequest):
        res = brute_force_knn(
            np.array([p.id for p in req.positions], dtype=np.int64),
            np.array([p.x for p in req.positions]),
            np.array([p.y for p in req.positions]),
            np.array([q.issuer_id for q in req.queries], dtype=np.int64),
            np.array([q.x for q in req.queries]),
            np.array([q.y for q in req.queries]),
            req.k,
        )
        out = []
        for i in range(res.n_queries):
            ids, dists = res.neighbours(i)
            out.append(
                QueryResultOut(
                    query_id=int(res.query_ids[i]),
                    neighbours=[
                        NeighbourOut(id=int(a), distance=float(d))
                        for a, d in zip(ids, dists)
                    ],
                )
            )
        return OracleResponse(results=out)

    return app
