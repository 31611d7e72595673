"""Thin HTTP client used by `mknn run --server`.

Reconstructs TickResult from the JSON payload so the harness writes the same
result files whether the engine ran in-process or behind the service. JSON
round-trips finite doubles exactly, so the files match byte for byte.
"""

from __future__ import annotations

import numpy as np
import httpx

from ..engine import TickMetrics, TickResult


class ServiceError(Exception):
    pass


class ServiceClient:
    def __init__(self, base_url: str | None = None, transport=None, timeout: float = 120.0):
        self._client = httpx.Client(
            base_url=base_url or "http://127.0.0.1:8000",
            transport=transport,
            timeout=timeout,
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _check(self, resp: httpx.Response) -> dict:
        if resp.status_code >= 400:
            raise ServiceError(f"{resp.request.url}: {resp.status_code} {resp.text}")
        return resp.json() if resp.content else {}

    def create_session(self, cfg, k: int) -> str:
        payload = {
            "k": k,
            "region_side": cfg.region_side,
            "th_quad": cfg.th_quad if cfg.th_quad == "auto" else int(cfg.th_quad),
            "l_max": cfg.l_max,
            "num_bins": cfg.num_bins,
            "max_refine_iters": cfg.max_refine_iters,
            "rebuild_window": cfg.rebuild_window,
            "rebuild_factor": cfg.rebuild_factor,
            "threads": cfg.threads,
        }
        data = self._check(self._client.post("/sessions", json=payload))
        return data["session_id"]

    def delete_session(self, session_id: str) -> None:
        self._check(self._client.delete(f"/sessions/{session_id}"))

    def tick(self, session_id: str, batch):
        payload = {
            "positions": [
                {"id": int(i), "x": float(a), "y": float(b)}
                for i, a, b in zip(batch.ids, batch.x, batch.y)
            ],
            "queries": [
                {"issuer_id": int(i), "x": float(a), "y": float(b)}
                for i, a, b in zip(batch.q_issuer, batch.qx, batch.qy)
            ],
        }
        data = self._check(self._client.post(f"/sessions/{session_id}/tick", json=payload))
        return _result_from_json(data["results"]), _metrics_from_json(data["metrics"])


def _result_from_json(rows: list[dict]) -> TickResult:
    rows = sorted(rows, key=lambda r: r["query_id"])
    qids = np.array([r["query_id"] for r in rows], dtype=np.int64)
    lengths = np.array([len(r["neighbours"]) for r in rows], dtype=np.int32)
    offsets = np.concatenate(([0], np.cumsum(lengths, dtype=np.int64)))
    flat_ids = np.array(
        [n["id"] for r in rows for n in r["neighbours"]], dtype=np.int64
    )
    flat_d = np.array(
        [n["distance"] for r in rows for n in r["neighbours"]], dtype=np.float64
    )
    return TickResult(qids, lengths, offsets, flat_ids, flat_d)


def _metrics_from_json(data: dict) -> TickMetrics:
    return TickMetrics(**data)
