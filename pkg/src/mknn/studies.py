"""Experiment drivers behind the CLI: run, verify, and the three benchmark
sweeps, plus dataset generation.

All drivers are deterministic given the config: workloads are seeded, the
engine is single-writer, and with threads=1 the emitted files are
byte-identical across repeat runs. Benchmarks time the engine through its
own per-phase metrics (wall clock, microseconds) and the brute-force
baseline with the same clock around its call.
"""

from __future__ import annotations

import os
import time

import numpy as np

from .config import ConfigError, RunConfig
from .datasets import ingest, write_dataset
from .engine import Engine, EngineConfig, TickMetrics
from .geometry import Rect
from .oracle import brute_force_knn, compare_results
from .quadindex import dump_index, index_objects
from .workload import WorkloadSpec, generate


def engine_config(cfg: RunConfig, k: int | None = None, th_quad=None,
                  threads: int | None = None) -> EngineConfig:
    return EngineConfig(
        k=cfg.k if k is None else k,
        region=Rect.square(cfg.region_side),
        th_quad=cfg.th_quad if th_quad is None else th_quad,
        l_max=cfg.l_max,
        num_bins=cfg.num_bins,
        max_refine_iters=cfg.max_refine_iters,
        rebuild_window=cfg.rebuild_window,
        rebuild_factor=cfg.rebuild_factor,
        threads=cfg.threads if threads is None else threads,
        self_check=cfg.self_check,
        audit_pruning=cfg.audit_pruning,
    )


def workload_spec(cfg: RunConfig, n: int | None = None, distribution: str | None = None,
                  ticks: int | None = None, k: int | None = None,
                  seed: int | None = None) -> WorkloadSpec:
    edges = None
    if (distribution or cfg.distribution) == "network" and cfg.network_file:
        edges = _read_segments(cfg.network_file)
    return WorkloadSpec(
        n_objects=cfg.n_objects if n is None else n,
        distribution=cfg.distribution if distribution is None else distribution,
        hotspots=cfg.hotspots,
        sigma=cfg.sigma,
        network_edges=edges,
        region=Rect.square(cfg.region_side),
        max_speed=cfg.max_speed,
        ticks=cfg.ticks if ticks is None else ticks,
        query_rate=cfg.query_rate,
        k=cfg.k if k is None else k,
        seed=cfg.seed if seed is None else seed,
    )


def _read_segments(path: str) -> np.ndarray:
    """Segment file: one `x1,y1,x2,y2` line per segment, `#` comments."""
    rows = []
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ConfigError(f"{path} line {line_no}: expected x1,y1,x2,y2")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ConfigError(f"{path} line {line_no}: bad number")
    if not rows:
        raise ConfigError(f"{path}: no segments")
    return np.asarray(rows)


def _out_path(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def load_batches(cfg: RunConfig):
    """Tick batches plus the effective k for the run."""
    if cfg.dataset:
        batches = ingest(cfg.dataset)
        ks = {b.k for b in batches if len(b.q_issuer)}
        if len(ks) > 1:
            raise ConfigError(f"dataset mixes k values {sorted(ks)}")
        k = ks.pop() if ks else cfg.k
        return batches, k
    return generate(workload_spec(cfg)), cfg.k


RESULT_HEADER = "tick,query_id,rank,neighbour_id,distance"


def write_result_block(f, tick: int, result) -> None:
    for qid, ids, dists in result.iter_rows():
        for r in range(len(ids)):
            f.write(f"{tick},{qid},{r},{ids[r]},{dists[r]:.9g}\n")


def _check_writable(cfg: RunConfig, names) -> None:
    # fail before any compute if the output directory is not writable
    for name in names:
        path = _out_path(cfg, name)
        try:
            with open(path, "w"):
                pass
        except OSError as e:
            raise ConfigError(f"cannot write {path}: {e}")


def generate_mode(cfg: RunConfig) -> int:
    spec = workload_spec(cfg)
    _check_writable(cfg, [cfg.dataset_out])
    batches = generate(spec)
    path = _out_path(cfg, cfg.dataset_out)
    write_dataset(path, spec, batches)
    n_q = sum(len(b.q_issuer) for b in batches)
    print(f"wrote {path}: {spec.ticks} ticks, {spec.n_objects} objects, {n_q} queries")
    return 0


def _run_ticks(cfg: RunConfig, batches, k: int, on_tick) -> None:
    """Common engine loop; on_tick(batch, result, metrics) per tick."""
    if cfg.server:
        from .service.client import ServiceClient

        with ServiceClient(base_url=cfg.server) as client:
            sid = client.create_session(cfg, k)
            try:
                for batch in batches:
                    result, metrics = client.tick(sid, batch)
                    on_tick(batch, result, metrics)
            finally:
                client.delete_session(sid)
        return
    with Engine(engine_config(cfg, k=k)) as eng:
        for batch in batches:
            result = eng.process_batch(batch)
            on_tick(batch, result, eng.last_metrics)
        if cfg.dump_index and eng.index is not None and batches:
            last = batches[-1]
            store = index_objects(last.ids, last.x, last.y, eng.index)
            with open(_out_path(cfg, cfg.dump_index), "w") as f:
                f.write(dump_index(eng.index, store))


def run_mode(cfg: RunConfig) -> int:
    batches, k = load_batches(cfg)
    _check_writable(cfg, [cfg.results_file, cfg.metrics_file])
    with open(_out_path(cfg, cfg.results_file), "w") as rf, \
            open(_out_path(cfg, cfg.metrics_file), "w") as mf:
        rf.write(RESULT_HEADER + "\n")
        mf.write(TickMetrics.csv_header() + "\n")

        def on_tick(batch, result, metrics):
            write_result_block(rf, batch.tick, result)
            mf.write(metrics.csv_row() + "\n")

        _run_ticks(cfg, batches, k, on_tick)
    return 0


def verify_mode(cfg: RunConfig) -> int:
    batches, k = load_batches(cfg)
    _check_writable(cfg, [cfg.results_file, cfg.metrics_file, cfg.report_file])
    mismatches = 0
    totals = {"exact": 0, "tie-equivalent": 0, "mismatch": 0}
    with open(_out_path(cfg, cfg.results_file), "w") as rf, \
            open(_out_path(cfg, cfg.metrics_file), "w") as mf, \
            open(_out_path(cfg, cfg.report_file), "w") as pf:
        rf.write(RESULT_HEADER + "\n")
        mf.write(TickMetrics.csv_header() + "\n")
        pf.write("query_id,verdict,engine_maxdist,oracle_maxdist\n")

        def on_tick(batch, result, metrics):
            nonlocal mismatches
            write_result_block(rf, batch.tick, result)
            mf.write(metrics.csv_row() + "\n")
            oracle = brute_force_knn(
                batch.ids, batch.x, batch.y, batch.q_issuer, batch.qx, batch.qy, k
            )
            report = compare_results(
                result, oracle, positions=(batch.ids, batch.x, batch.y)
            )
            body = report.to_csv().split("\n", 1)[1]
            pf.write(body)
            for verdict, count in report.counts.items():
                totals[verdict] += count
            mismatches += report.counts["mismatch"]

        _run_ticks(cfg, batches, k, on_tick)
    print(
        f"verify: {totals['exact']} exact, {totals['tie-equivalent']} tie-equivalent, "
        f"{totals['mismatch']} mismatch"
    )
    return 2 if mismatches else 0


def _bench_workload(cfg: RunConfig, n: int, distribution: str, ticks: int, k: int):
    return generate(workload_spec(cfg, n=n, distribution=distribution, ticks=ticks, k=k))


def bench_s1(cfg: RunConfig) -> int:
    _check_writable(cfg, ["s1_times.csv", "s1_summary.csv"])
    k = cfg.s1_k
    batches = _bench_workload(cfg, cfg.s1_n, cfg.distribution, cfg.s1_ticks, k)
    rows, summary = [], []
    for th in cfg.s1_th_quad:
        with Engine(engine_config(cfg, k=k, th_quad=int(th))) as eng:
            times = []
            for batch in batches:
                eng.process_batch(batch)
                times.append(eng.last_metrics.t_total_us)
            for t_i, t in enumerate(times):
                rows.append(f"{th},{k},{t_i},{t}")
            mean = sum(times) / len(times)
            summary.append(f"{th},{k},{mean:.1f}")
            print(f"s1 th_quad={th}: mean tick {mean / 1000.0:.2f} ms")
    with open(_out_path(cfg, "s1_times.csv"), "w") as f:
        f.write("th_quad,k,tick,tick_us\n" + "\n".join(rows) + "\n")
    with open(_out_path(cfg, "s1_summary.csv"), "w") as f:
        f.write("th_quad,k,mean_tick_us\n" + "\n".join(summary) + "\n")
    return 0


def _timed_brute(batch, k: int) -> int:
    t0 = time.perf_counter_ns()
    brute_force_knn(batch.ids, batch.x, batch.y, batch.q_issuer, batch.qx, batch.qy, k)
    return (time.perf_counter_ns() - t0) // 1000


def bench_s2(cfg: RunConfig) -> int:
    _check_writable(cfg, ["s2_times.csv", "s2_summary.csv"])
    k = cfg.s2_k
    rows, summary = [], []
    for n in cfg.s2_n:
        batches = _bench_workload(cfg, int(n), cfg.distribution, cfg.s2_ticks, k)
        engine_times, brute_times = [], []
        with Engine(engine_config(cfg, k=k)) as eng:
            for batch in batches:
                eng.process_batch(batch)
                engine_times.append(eng.last_metrics.t_total_us)
                brute_times.append(_timed_brute(batch, k))
        for i, (a, b) in enumerate(zip(engine_times, brute_times)):
            rows.append(f"{n},{k},{i},{a},{b}")
        em = sum(engine_times) / len(engine_times)
        bm = sum(brute_times) / len(brute_times)
        summary.append(f"{n},{k},{em:.1f},{bm:.1f},{bm / em:.2f}")
        print(f"s2 n={n}: engine {em / 1000.0:.2f} ms, brute {bm / 1000.0:.2f} ms "
              f"({bm / em:.1f}x)")
    with open(_out_path(cfg, "s2_times.csv"), "w") as f:
        f.write("n,k,tick,engine_us,brute_us\n" + "\n".join(rows) + "\n")
    with open(_out_path(cfg, "s2_summary.csv"), "w") as f:
        f.write("n,k,engine_mean_us,brute_mean_us,speedup\n" + "\n".join(summary) + "\n")
    return 0


def bench_s3(cfg: RunConfig) -> int:
    _check_writable(cfg, ["s3_times.csv", "s3_summary.csv"])
    k = cfg.s3_k
    rows, summary = [], []
    for dist in cfg.s3_distributions:
        for n in cfg.s3_n:
            batches = _bench_workload(cfg, int(n), dist, cfg.s3_ticks, k)
            engine_times, brute_times = [], []
            with Engine(engine_config(cfg, k=k)) as eng:
                for batch in batches:
                    eng.process_batch(batch)
                    engine_times.append(eng.last_metrics.t_total_us)
                    brute_times.append(_timed_brute(batch, k))
            for i, (a, b) in enumerate(zip(engine_times, brute_times)):
                rows.append(f"{dist},{n},{k},{i},{a},{b}")
            em = sum(engine_times) / len(engine_times)
            bm = sum(brute_times) / len(brute_times)
            summary.append(f"{dist},{n},{k},{em:.1f},{bm:.1f}")
            print(f"s3 {dist} n={n}: engine {em / 1000.0:.2f} ms, "
                  f"brute {bm / 1000.0:.2f} ms")
    with open(_out_path(cfg, "s3_times.csv"), "w") as f:
        f.write("distribution,n,k,tick,engine_us,brute_us\n" + "\n".join(rows) + "\n")
    with open(_out_path(cfg, "s3_summary.csv"), "w") as f:
        f.write("distribution,n,k,engine_mean_us,brute_mean_us\n" + "\n".join(summary) + "\n")
    return 0


def run_study(cfg: RunConfig) -> int:
    """Dispatch on the validated config's mode."""
    if cfg.mode == "run":
        return run_mode(cfg)
    if cfg.mode == "verify":
        return verify_mode(cfg)
    if cfg.mode == "bench-s1":
        return bench_s1(cfg)
    if cfg.mode == "bench-s2":
        return bench_s2(cfg)
    if cfg.mode == "bench-s3":
        return bench_s3(cfg)
    raise ConfigError(f"unhandled mode {cfg.mode!r}")
