"""Deterministic synthetic workloads: placement, movement, query sampling.

All randomness flows through one numpy PCG64 generator (np.random.default_rng)
seeded from the WorkloadSpec, with a fixed draw order: placement first, then
per tick movement followed by query sampling. Identical parameters + seed
therefore yield identical batch sequences on any platform.

Movement is a bounded random walk: per-object heading and speed persist
across ticks and drift by small normal increments, and objects bounce off
the region border billiard-style (velocity flips with each reflection, which
keeps the long-run spatial distribution unbiased). The per-tick displacement
never exceeds max_speed; any floating-point overshoot from reflection is
rescaled back toward the previous position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .geometry import Rect

_HEADING_JITTER = 0.35  # radians per tick, stddev

DISTRIBUTIONS = ("uniform", "gaussian", "network")


@dataclass
class WorkloadSpec:
    n_objects: int
    distribution: str = "uniform"
    hotspots: int = 16
    sigma: float = 500.0
    network_edges: np.ndarray | None = None  # (m, 4) segments x1,y1,x2,y2
    region: Rect = field(default_factory=lambda: Rect.square(22500.0))
    max_speed: float = 200.0
    ticks: int = 30
    query_rate: float = 1.0
    k: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_objects < 0:
            raise ValueError("n_objects must be >= 0")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "gaussian" and self.hotspots < 1:
            raise ValueError("gaussian distribution needs hotspots >= 1")
        if not 0.0 <= self.query_rate <= 1.0:
            raise ValueError("query_rate must be in [0, 1]")
        if self.max_speed < 0:
            raise ValueError("max_speed must be >= 0")
        if self.ticks < 1:
            raise ValueError("ticks must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class TickBatch:
    """One tick's deduplicated input: full position snapshot plus queries."""

    tick: int
    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    q_issuer: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
    k: int


@dataclass
class MovementState:
    headings: np.ndarray
    speeds: np.ndarray


def _reflect(v, lo: float, hi: float):
    """Fold values into [lo, hi] by reflection; 1-Lipschitz."""
    span = hi - lo
    if span <= 0:
        return np.full_like(v, lo)
    t = np.mod(v - lo, 2.0 * span)
    t = np.where(t > span, 2.0 * span - t, t)
    return np.clip(lo + t, lo, hi)


def _bounce(v, vel, lo: float, hi: float):
    """Reflect positions into [lo, hi], flipping velocity on each bounce."""
    span = hi - lo
    if span <= 0:
        return np.full_like(v, lo), np.zeros_like(vel)
    v = np.asarray(v, dtype=np.float64).copy()
    vel = vel.copy()
    # per-tick motion is far smaller than the region, so this loop settles
    # in one pass; the loop form keeps extreme configs correct anyway
    while True:
        low = v < lo
        if low.any():
            v[low] = 2.0 * lo - v[low]
            vel[low] = -vel[low]
        high = v > hi
        if high.any():
            v[high] = 2.0 * hi - v[high]
            vel[high] = -vel[high]
        if not (low.any() or high.any()):
            return np.clip(v, lo, hi), vel


def step_movement(x, y, max_speed: float, region: Rect, rng: np.random.Generator,
                  state: MovementState | None = None):
    """Advance every object one tick; returns (x, y, state).

    Passing state=None initializes headings and speeds from the rng; feed the
    returned state back in to keep trajectories coherent across ticks.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if state is None:
        state = MovementState(
            headings=rng.uniform(0.0, 2.0 * np.pi, n),
            speeds=rng.uniform(0.0, max_speed, n),
        )
    h = state.headings + rng.normal(0.0, _HEADING_JITTER, n)
    s = state.speeds + rng.normal(0.0, max_speed / 8.0, n)
    s = np.clip(s, 0.0, max_speed)
    vx = s * np.cos(h)
    vy = s * np.sin(h)
    n2 = vx * vx + vy * vy
    lim = max_speed * max_speed
    over = n2 > lim
    if over.any():
        # rounding can push |v| a hair past the cap; rescale with margin
        f = max_speed / np.sqrt(n2[over]) * (1.0 - 1e-12)
        vx[over] *= f
        vy[over] *= f
    # Billiard bounce: fold position back in AND flip the velocity component,
    # otherwise objects pile up against the borders waiting for the heading
    # walk to turn them around, skewing the spatial distribution.
    nx, vx = _bounce(x + vx, vx, region.x_lo, region.x_hi)
    ny, vy = _bounce(y + vy, vy, region.y_lo, region.y_hi)
    mdx = nx - x
    mdy = ny - y
    m2 = mdx * mdx + mdy * mdy
    over = m2 > lim
    if over.any():
        # reflection arithmetic rounds at the scale of the region; shrink the
        # overshoot toward the old position so the bound is strict
        f = max_speed / np.sqrt(m2[over]) * (1.0 - 1e-12)
        nx[over] = x[over] + mdx[over] * f
        ny[over] = y[over] + mdy[over] * f
    still = (vx == 0.0) & (vy == 0.0)
    new_h = np.where(still, h, np.arctan2(vy, vx))
    return nx, ny, MovementState(new_h, s)


def make_grid_network(region: Rect, lines: int = 8) -> np.ndarray:
    """Synthetic fallback street grid: `lines` horizontal and vertical
    segments spanning the region."""
    xs = np.linspace(region.x_lo, region.x_hi, lines)
    ys = np.linspace(region.y_lo, region.y_hi, lines)
    horiz = np.column_stack(
        [np.full(lines, region.x_lo), ys, np.full(lines, region.x_hi), ys]
    )
    vert = np.column_stack(
        [xs, np.full(lines, region.y_lo), xs, np.full(lines, region.y_hi)]
    )
    return np.concatenate([horiz, vert])


@dataclass
class _NetworkState:
    edge: np.ndarray  # segment index per object, fixed
    u: np.ndarray  # phase on the segment's 2L reflection cycle
    speeds: np.ndarray


class WorkloadGenerator:
    """Iterates TickBatch objects for one spec. Single-threaded by design;
    run independent generators for parallel streams."""

    def __init__(self, spec: WorkloadSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self._ids = np.arange(spec.n_objects, dtype=np.int64)
        self._move_state: MovementState | None = None
        self._net: _NetworkState | None = None
        self._edges: np.ndarray | None = None
        self._x, self._y = self._place()

    def _place(self):
        spec, rng, n = self.spec, self.rng, self.spec.n_objects
        r = spec.region
        if spec.distribution == "uniform":
            return (
                rng.uniform(r.x_lo, r.x_hi, n),
                rng.uniform(r.y_lo, r.y_hi, n),
            )
        if spec.distribution == "gaussian":
            cx = rng.uniform(r.x_lo, r.x_hi, spec.hotspots)
            cy = rng.uniform(r.y_lo, r.y_hi, spec.hotspots)
            which = self._ids % spec.hotspots
            x = cx[which] + rng.normal(0.0, spec.sigma, n)
            y = cy[which] + rng.normal(0.0, spec.sigma, n)
            return np.clip(x, r.x_lo, r.x_hi), np.clip(y, r.y_lo, r.y_hi)
        # network
        edges = spec.network_edges
        if edges is None:
            edges = make_grid_network(r)
        edges = np.asarray(edges, dtype=np.float64).reshape(-1, 4)
        if len(edges) == 0:
            raise ValueError("network distribution needs at least one segment")
        self._edges = edges
        lengths = np.hypot(edges[:, 2] - edges[:, 0], edges[:, 3] - edges[:, 1])
        if not (lengths > 0).any():
            raise ValueError("network segments all have zero length")
        cum = np.cumsum(lengths)
        pick = rng.uniform(0.0, cum[-1], n)
        # fp rounding can return the upper bound; keep the edge in range
        edge = np.minimum(np.searchsorted(cum, pick, side="right"), len(edges) - 1)
        offset = pick - (cum[edge] - lengths[edge])
        # random initial direction encoded as phase on the 2L cycle
        backwards = rng.random(n) < 0.5
        u = np.where(backwards, 2.0 * lengths[edge] - offset, offset)
        self._net = _NetworkState(
            edge=edge,
            u=u,
            speeds=rng.uniform(0.0, spec.max_speed, n),
        )
        return self._net_positions()

    def _net_positions(self):
        st, edges = self._net, self._edges
        L = np.hypot(
            edges[st.edge, 2] - edges[st.edge, 0],
            edges[st.edge, 3] - edges[st.edge, 1],
        )
        along = np.where(st.u > L, 2.0 * L - st.u, st.u)
        along = np.clip(along, 0.0, L)
        t = np.where(L > 0, along / np.where(L > 0, L, 1.0), 0.0)
        x = edges[st.edge, 0] + t * (edges[st.edge, 2] - edges[st.edge, 0])
        y = edges[st.edge, 1] + t * (edges[st.edge, 3] - edges[st.edge, 1])
        return x, y

    def _advance(self) -> None:
        spec = self.spec
        if spec.distribution == "network":
            st = self._net
            s = st.speeds + self.rng.normal(0.0, spec.max_speed / 8.0, len(st.u))
            st.speeds = np.clip(s, 0.0, spec.max_speed)
            L = np.hypot(
                self._edges[st.edge, 2] - self._edges[st.edge, 0],
                self._edges[st.edge, 3] - self._edges[st.edge, 1],
            )
            st.u = np.mod(st.u + st.speeds, np.where(L > 0, 2.0 * L, 1.0))
            self._x, self._y = self._net_positions()
        else:
            self._x, self._y, self._move_state = step_movement(
                self._x, self._y, spec.max_speed, spec.region, self.rng,
                self._move_state,
            )

    def _sample_queries(self):
        spec = self.spec
        if spec.query_rate >= 1.0:
            # exactly one query per object, no sampling draw
            sel = slice(None)
            return self._ids[sel], self._x[sel], self._y[sel]
        mask = self.rng.random(spec.n_objects) < spec.query_rate
        return self._ids[mask], self._x[mask], self._y[mask]

    def batches(self) -> Iterator[TickBatch]:
        for tick in range(self.spec.ticks):
            if tick > 0:
                self._advance()
            qi, qx, qy = self._sample_queries()
            yield TickBatch(
                tick=tick,
                ids=self._ids.copy(),
                x=self._x.copy(),
                y=self._y.copy(),
                q_issuer=qi.copy(),
                qx=qx.copy(),
                qy=qy.copy(),
                k=self.spec.k,
            )


def generate(spec: WorkloadSpec) -> list[TickBatch]:
    """Materialize the full batch sequence for a spec."""
    return list(WorkloadGenerator(spec).batches())
