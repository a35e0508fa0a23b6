"""Run configuration: a TOML file turned into frozen, validated dataclasses.

Example::

    out = "results"
    threads = 2
    seed = 0
    alpha = 0.25

    [lattice]
    kind = "interval"      # or "christ"
    depth = 10

    [[weights]]
    family = "power"       # constant | power | cascade | file
    params = [0.0, 0.5, -0.5]

    [[weights]]
    family = "cascade"
    params = [0.3]
    seeds = [0, 1]

    [shifts]
    m = [0, 1, 2]
    n = [0, 1, 2]
    max_complexity = 4     # keep pairs with m + n <= 4
    strategies = ["extremal", "random-sign"]
    seeds = [0]

    [norm]
    method = "auto"
    tol = 1e-10
    timing = false

    [checks]
    suites = ["decomp", "uval", "final"]
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .lattice import MAX_INTERVAL_DEPTH
from .norms import METHODS
from .shift import STRATEGIES

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUITES = ("decomp", "linfty", "uval", "sublemma", "taylor", "sbor", "carl1", "terms", "final", "admissibility")
FAMILIES = ("constant", "power", "cascade", "file")
LATTICE_KINDS = ("interval", "christ")
MAX_CHRIST_POINTS = 4096


@dataclass(frozen=True)
class LatticeSpec:
    kind: str = "interval"
    depth: int = 8
    delta: float = 0.5
    input: str | None = None
    input_kind: str = "points"   # or "distance-matrix"
    seed: int = 0


@dataclass(frozen=True)
class WeightSpec:
    family: str
    params: tuple[float, ...] = (0.0,)
    seeds: tuple[int, ...] = (0,)
    x0: float = 0.0
    path: str | None = None


@dataclass(frozen=True)
class ShiftSpec:
    pairs: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))
    strategies: tuple[str, ...] = ("extremal",)
    seeds: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class NormSpec:
    method: str = "auto"
    tol: float = 1e-10
    max_iter: int | None = None
    timing: bool = False


@dataclass(frozen=True)
class CheckSpec:
    suites: tuple[str, ...] = SUITES
    instances: int = 1
    sublemma_samples: int = 10_000
    sublemma_Q: tuple[float, ...] = (2.0, 10.0, 100.0)
    taylor_generations: int = 3
    c_alpha: float | None = None
    corrupt_coefficient: bool = False


@dataclass(frozen=True)
class RunConfig:
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    weights: tuple[WeightSpec, ...] = (
        WeightSpec("power", (0.0, 0.5, -0.5)),
        WeightSpec("cascade", (0.3,), (0,)),
    )
    shifts: ShiftSpec = field(default_factory=ShiftSpec)
    norm: NormSpec = field(default_factory=NormSpec)
    checks: CheckSpec = field(default_factory=CheckSpec)
    alpha: float = 0.25
    out: str = "results"
    threads: int = 1
    seed: int = 0
    base_dir: str = "."

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def with_overrides(self, out=None, threads=None, seed=None) -> "RunConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, out=str(out))
        if threads is not None:
            cfg = replace(cfg, threads=int(threads))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        cfg.validate()
        return cfg

    def validate(self) -> "RunConfig":
        lat = self.lattice
        if lat.kind not in LATTICE_KINDS:
            raise ConfigError(f"lattice.kind must be one of {LATTICE_KINDS}, got {lat.kind!r}")
        if lat.kind == "interval" and not 1 <= lat.depth <= MAX_INTERVAL_DEPTH:
            raise ConfigError(f"lattice.depth must lie in [1, {MAX_INTERVAL_DEPTH}] for interval lattices")
        if lat.kind == "christ":
            if lat.input is None:
                raise ConfigError("christ lattices need lattice.input (a CSV of points or distances)")
            if not self.resolve(lat.input).is_file():
                raise ConfigError(f"lattice.input {lat.input!r} does not exist")
            if lat.input_kind not in ("points", "distance-matrix"):
                raise ConfigError("lattice.input_kind must be 'points' or 'distance-matrix'")
            if not 1 <= lat.depth <= 30:
                raise ConfigError("lattice.depth must lie in [1, 30]")
            if not 0 < lat.delta < 1:
                raise ConfigError("lattice.delta must lie in (0, 1)")
        if not self.weights:
            raise ConfigError("at least one [[weights]] entry is required")
        for i, w in enumerate(self.weights):
            if w.family not in FAMILIES:
                raise ConfigError(f"weights[{i}].family must be one of {FAMILIES}, got {w.family!r}")
            if not w.params or not w.seeds:
                raise ConfigError(f"weights[{i}]: params and seeds must be nonempty")
            if w.family == "file":
                if w.path is None or not self.resolve(w.path).is_file():
                    raise ConfigError(f"weights[{i}].path {w.path!r} does not exist")
            if w.family == "power" and lat.kind != "interval":
                raise ConfigError(f"weights[{i}]: power weights need an interval lattice")
            if w.family == "power" and any(not -1 < g < 1 for g in w.params):
                raise ConfigError(f"weights[{i}]: power exponents must lie in (-1, 1)")
            if w.family == "cascade" and any(not 0 <= e < 1 for e in w.params):
                raise ConfigError(f"weights[{i}]: cascade epsilon must lie in [0, 1)")
            if w.family == "constant" and any(not c > 0 for c in w.params):
                raise ConfigError(f"weights[{i}]: constant weights must be positive")
        sh = self.shifts
        if not sh.pairs or not sh.strategies or not sh.seeds:
            raise ConfigError("shift grid is empty")
        for m, n in sh.pairs:
            if m < 0 or n < 0 or max(m, n) > lat.depth:
                raise ConfigError(f"shift complexity ({m},{n}) is invalid for depth {lat.depth}")
        for s in sh.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}; expected one of {STRATEGIES}")
        if self.norm.method not in METHODS:
            raise ConfigError(f"norm.method must be one of {METHODS}")
        if not self.norm.tol > 0:
            raise ConfigError("norm.tol must be positive")
        ch = self.checks
        for s in ch.suites:
            if s not in SUITES:
                raise ConfigError(f"unknown check suite {s!r}; expected some of {SUITES}")
        if ch.instances < 1 or ch.sublemma_samples < 1:
            raise ConfigError("checks.instances and checks.sublemma_samples must be positive")
        if any(not q > 1 for q in ch.sublemma_Q):
            raise ConfigError("checks.sublemma_Q values must exceed 1")
        if not 0 < self.alpha < 0.5:
            raise ConfigError("alpha must lie in (0, 1/2)")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        return self


_TOP_KEYS = {"lattice", "weights", "shifts", "norm", "checks", "alpha", "out", "threads", "seed"}


def _take(table: dict, name: str, allowed: set[str]) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(extra)}")
    return table


def _floats(v, name) -> tuple[float, ...]:
    v = v if isinstance(v, list) else [v]
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number or a list of numbers") from None


def _ints(v, name) -> tuple[int, ...]:
    v = v if isinstance(v, list) else [v]
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{name} must be an integer or a list of integers")
    return tuple(v)


def _strs(v, name) -> tuple[str, ...]:
    v = v if isinstance(v, list) else [v]
    if not all(isinstance(x, str) for x in v):
        raise ConfigError(f"{name} must be a string or a list of strings")
    return tuple(v)


def _shift_pairs(t: dict) -> tuple[tuple[int, int], ...]:
    if "pairs" in t:
        if any(k in t for k in ("m", "n")):
            raise ConfigError("[shifts] takes either 'pairs' or 'm'/'n', not both")
        raw = t["pairs"]
        if not isinstance(raw, list) or not all(isinstance(p, list) and len(p) == 2 for p in raw):
            raise ConfigError("shifts.pairs must be a list of [m, n] pairs")
        pairs = [tuple(_ints(p, "shifts.pairs")) for p in raw]
    else:
        ms = _ints(t.get("m", [0, 1]), "shifts.m")
        ns = _ints(t.get("n", [0, 1]), "shifts.n")
        pairs = [(m, n) for m in ms for n in ns]
    if "max_complexity" in t:
        cap = t["max_complexity"]
        pairs = [p for p in pairs if p[0] + p[1] <= cap]
    return tuple(pairs)


def config_from_dict(d: dict, base_dir: str = ".") -> RunConfig:
    d = _take(d, "top level", _TOP_KEYS)
    kw: dict = {"base_dir": str(base_dir)}
    if "lattice" in d:
        t = _take(d["lattice"], "lattice", {"kind", "depth", "delta", "input", "input_kind", "seed"})
        kw["lattice"] = LatticeSpec(**t)
    if "weights" in d:
        if not isinstance(d["weights"], list):
            raise ConfigError("weights must be an array of tables ([[weights]])")
        ws = []
        for i, t in enumerate(d["weights"]):
            t = _take(t, f"weights[{i}]", {"family", "params", "seeds", "x0", "path"})
            if "family" not in t:
                raise ConfigError(f"weights[{i}] needs a family")
            default = (1.0,) if t["family"] in ("constant", "file") else (0.0,)
            ws.append(WeightSpec(
                family=t["family"],
                params=_floats(t["params"], f"weights[{i}].params") if "params" in t else default,
                seeds=_ints(t.get("seeds", [0]), f"weights[{i}].seeds"),
                x0=float(t.get("x0", 0.0)),
                path=t.get("path"),
            ))
        kw["weights"] = tuple(ws)
    if "shifts" in d:
        t = _take(d["shifts"], "shifts", {"m", "n", "pairs", "max_complexity", "strategies", "seeds"})
        kw["shifts"] = ShiftSpec(
            pairs=_shift_pairs(t),
            strategies=_strs(t.get("strategies", ["extremal"]), "shifts.strategies"),
            seeds=_ints(t.get("seeds", [0]), "shifts.seeds"),
        )
    if "norm" in d:
        t = _take(d["norm"], "norm", {"method", "tol", "max_iter", "timing"})
        kw["norm"] = NormSpec(**t)
    if "checks" in d:
        t = _take(d["checks"], "checks", {"suites", "instances", "sublemma_samples", "sublemma_Q",
                                          "taylor_generations", "c_alpha", "corrupt_coefficient"})
        t = dict(t)
        if "suites" in t:
            t["suites"] = _strs(t["suites"], "checks.suites")
        if "sublemma_Q" in t:
            t["sublemma_Q"] = _floats(t["sublemma_Q"], "checks.sublemma_Q")
        kw["checks"] = CheckSpec(**t)
    for k in ("alpha", "out", "threads", "seed"):
        if k in d:
            kw[k] = d[k]
    try:
        cfg = RunConfig(**kw)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg.validate()


def load_config(path=None) -> RunConfig:
    """Read a TOML file; ``None`` gives the built-in default configuration."""
    if path is None:
        return RunConfig().validate()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data, base_dir=str(p.parent))
