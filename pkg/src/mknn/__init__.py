"""Batched k-NN queries over moving-object observations, tick by tick.

The package answers massive batches of k-nearest-neighbour queries against
the last-known positions of moving objects. Each tick, objects are indexed
into a Morton-coded PR-quadtree grid; queries first scan their own leaf,
then walk outward left and right along the Morton leaf order, pruning
quadrants that cannot beat their current k-th distance, until every list is
provably complete. Results are exact (ties resolved arbitrarily, as any
subset of a tie group is valid).
"""

from .config import ConfigError, RunConfig, load_config
from .engine import Engine, EngineConfig, TickMetrics, TickResult, resolve_th_quad
from .geometry import MortonCell, Point, Rect
from .kselect import KSelectOutcome, find_k_dist, find_min_max_dist
from .oracle import OracleResult, brute_force_knn, compare_results
from .quadindex import ObjectStore, QuadIndex, build_index, index_objects, should_rebuild
from .workload import MovementState, TickBatch, WorkloadSpec, generate, step_movement

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Engine",
    "EngineConfig",
    "KSelectOutcome",
    "MortonCell",
    "MovementState",
    "ObjectStore",
    "OracleResult",
    "Point",
    "QuadIndex",
    "Rect",
    "RunConfig",
    "TickBatch",
    "TickMetrics",
    "TickResult",
    "WorkloadSpec",
    "__version__",
    "brute_force_knn",
    "build_index",
    "compare_results",
    "find_k_dist",
    "find_min_max_dist",
    "generate",
    "index_objects",
    "load_config",
    "resolve_th_quad",
    "should_rebuild",
    "step_movement",
]
