"""Run configuration: `key = value` text files plus command-line overrides.

Grammar (exact): a config file is a sequence of lines; blank lines and lines
whose first non-space character is `#` are ignored; every other line must be
`key = value` where the key matches [a-z0-9_]+ and the value is the rest of
the line with surrounding whitespace stripped. No inline comments. List
values are comma-separated scalars. Overrides arrive as KEY=VALUE strings
and replace file values. Everything is validated before any work runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields

MODES = ("run", "verify", "bench-s1", "bench-s2", "bench-s3")

_KEY_RE = re.compile(r"^[a-z0-9_]+$")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    mode: str = "run"
    dataset: str | None = None
    server: str | None = None
    out_dir: str = "."
    results_file: str = "results.csv"
    metrics_file: str = "metrics.csv"
    report_file: str = "report.csv"
    dataset_out: str = "dataset.txt"
    dump_index: str | None = None
    # workload
    n_objects: int = 1000
    distribution: str = "uniform"
    hotspots: int = 16
    sigma: float = 500.0
    network_file: str | None = None
    region_side: float = 22500.0
    max_speed: float = 200.0
    ticks: int = 30
    query_rate: float = 1.0
    seed: int = 0
    # engine
    k: int = 32
    th_quad: str = "auto"  # "auto" or an integer literal
    l_max: int = 10
    num_bins: int = 32
    max_refine_iters: int = 64
    rebuild_window: int = 3
    rebuild_factor: float = 1.5
    threads: int = 1
    self_check: bool = False
    audit_pruning: bool = False
    # study sweeps
    s1_th_quad: tuple = (4, 16, 64, 256, 1024, 4096)
    s1_n: int = 100000
    s1_k: int = 32
    s1_ticks: int = 3
    s2_n: tuple = (10000, 50000)
    s2_k: int = 32
    s2_ticks: int = 3
    s3_n: tuple = (5000, 20000)
    s3_distributions: tuple = ("uniform", "gaussian", "network")
    s3_k: int = 32
    s3_ticks: int = 3

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.th_quad != "auto":
            try:
                v = int(self.th_quad)
            except ValueError:
                raise ConfigError(f"th_quad must be 'auto' or an integer, got {self.th_quad!r}")
            if v < 1:
                raise ConfigError("th_quad must be >= 1")
        for key in ("n_objects", "ticks", "k", "l_max", "num_bins", "threads",
                    "rebuild_window", "hotspots", "max_refine_iters"):
            if getattr(self, key) < 1 and not (key in ("hotspots",) and self.distribution != "gaussian"):
                raise ConfigError(f"{key} must be >= 1")
        if not 1 <= self.l_max <= 10:
            raise ConfigError("l_max must be in [1, 10]")
        if not 0.0 <= self.query_rate <= 1.0:
            raise ConfigError("query_rate must be in [0, 1]")
        if self.max_speed < 0 or self.sigma < 0:
            raise ConfigError("max_speed and sigma must be >= 0")
        if self.region_side <= 0:
            raise ConfigError("region_side must be > 0")
        if self.rebuild_factor <= 0:
            raise ConfigError("rebuild_factor must be > 0")
        for key in ("s1_th_quad", "s2_n", "s3_n"):
            vals = getattr(self, key)
            if not vals or any(int(v) < 1 for v in vals):
                raise ConfigError(f"{key} must be a non-empty list of positive integers")
        for d in self.s3_distributions:
            if d not in ("uniform", "gaussian", "network"):
                raise ConfigError(f"s3_distributions contains unknown {d!r}")


_OPTIONAL_STR = ("dataset", "server", "dump_index", "network_file")
_INT_LISTS = ("s1_th_quad", "s2_n", "s3_n")
_STR_LISTS = ("s3_distributions",)


def _coerce(key: str, raw: str):
    ftypes = {f.name: f.type for f in fields(RunConfig)}
    if key not in ftypes:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key in _OPTIONAL_STR:
        return raw or None
    if key in _INT_LISTS:
        try:
            return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
        except ValueError:
            raise ConfigError(f"{key} expects a comma-separated integer list, got {raw!r}")
    if key in _STR_LISTS:
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    if key == "th_quad":
        return raw
    default = getattr(RunConfig(), key)
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}")
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}")
    return raw


def parse_config_text(text: str) -> dict:
    """Parse config text into a {key: coerced value} dict."""
    out: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {line_no}: bad key {key!r}")
        out[key] = _coerce(key, val)
    return out


def load_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Build a validated RunConfig from an optional file plus KEY=VALUE
    override strings (applied after the file, in order)."""
    values: dict = {}
    if path is not None:
        try:
            with open(path) as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}")
        values.update(parse_config_text(text))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"--set: bad key {key!r}")
        values[key] = _coerce(key, val)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg
