"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Union

from pydantic import BaseModel, Field


class EngineSettings(BaseModel):
    k: int = Field(ge=1)
    region_side: float = Field(default=22500.0, gt=0)
    th_quad: Union[int, Literal["auto"]] = "auto"
    l_max: int = Field(default=10, ge=1, le=10)
    num_bins: int = Field(default=32, ge=2)
    max_refine_iters: int = Field(default=64, ge=1)
    rebuild_window: int = Field(default=3, ge=1)
    rebuild_factor: float = Field(default=1.5, gt=0)
    threads: int = Field(default=1, ge=1)


class PositionIn(BaseModel):
    id: int
    x: float
    y: float


class QueryIn(BaseModel):
    issuer_id: int
    x: float
    y: float


class TickRequest(BaseModel):
    positions: list[PositionIn]
    queries: list[QueryIn] = []


class NeighbourOut(BaseModel):
    id: int
    distance: float


class QueryResultOut(BaseModel):
    query_id: int
    neighbours: list[NeighbourOut]


class TickMetricsOut(BaseModel):
    tick: int
    n_objects: int
    n_queries: int
    iterations_left: int
    iterations_right: int
    distance_evals: int
    pruned_leaves: int
    rebuild_flag: int
    t_build_us: int
    t_index_objects_us: int
    t_index_queries_us: int
    t_first_iteration_us: int
    t_loop_us: int
    t_total_us: int


class TickResponse(BaseModel):
    tick: int
    results: list[QueryResultOut]
    metrics: TickMetricsOut


class SessionInfo(BaseModel):
    session_id: str
    ticks_processed: int
    settings: EngineSettings


class OracleRequest(BaseModel):
    positions: list[PositionIn]
    queries: list[QueryIn]
    k: int = Field(ge=1)


class OracleResponse(BaseModel):
    results: list[QueryResultOut]
