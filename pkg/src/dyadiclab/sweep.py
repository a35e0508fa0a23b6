"""Batch drivers behind the command line: norm sweeps, check suites, plots.

Grid points are farmed out to a process pool; results are gathered with
``Executor.map`` so output order is the grid order no matter which worker
finishes first.
"""
from __future__ import annotations

import csv
import json
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CsvParseError, DyadicLabError
from .haar import build_haar
from .io import read_distance_csv, read_points_csv, read_weight_csv
from .lattice import build_christ_lattice, build_interval_lattice
from .measure import a2_characteristic, cascade_weight, constant_weight, default_measure, power_weight
from .norms import weighted_norm
from .proofcheck import (bellman_hessian_check, decomp_check, final_bounds, taylor_segment_check, term_check,
                         uval_check)
from .report import CheckRecord, _jsonable
from .shift import build_shift

CSV_COLUMNS = (
    "latticeKind", "depth", "weightFamily", "weightParam", "seed", "m", "n", "strategy",
    "a2", "norm", "method", "residual", "wallTimeMs",
    "weightSeed", "iterations", "converged", "ratioQ", "ratioN1Q", "ratioN3Q", "ratioN4Q", "error",
)
RATIO_POWERS = {"ratioN1Q": 1, "ratioN3Q": 3, "ratioN4Q": 4}


# ---------------------------------------------------------------- context

def build_lattice_from_config(cfg: RunConfig):
    spec = cfg.lattice
    if spec.kind == "interval":
        return build_interval_lattice(spec.depth)
    path = cfg.resolve(spec.input)
    space = read_points_csv(path) if spec.input_kind == "points" else read_distance_csv(path)
    return build_christ_lattice(space, delta=spec.delta, depth=spec.depth, seed=spec.seed)


class _Context:
    """Lattice, measure, Haar system and the weight grid for one config."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.lat = build_lattice_from_config(cfg)
        self.mu = default_measure(self.lat)
        self.sys_mu = build_haar(self.lat, self.mu)
        self.points = []
        for spec in cfg.weights:
            if spec.family == "file":
                self.points.append((spec, 1.0, 0))
                continue
            seeds = spec.seeds if spec.family == "cascade" else (0,)
            for p in spec.params:
                for s in seeds:
                    self.points.append((spec, float(p), int(s)))
        self._weights = {}

    def weight(self, i: int):
        if i not in self._weights:
            spec, p, s = self.points[i]
            if spec.family == "constant":
                w = constant_weight(self.mu, p)
            elif spec.family == "power":
                w = power_weight(p, self.lat, spec.x0)
            elif spec.family == "cascade":
                w = cascade_weight(p, s, self.lat, self.mu)
            else:
                w = read_weight_csv(self.cfg.resolve(spec.path), self.mu)
            Q, _ = a2_characteristic(w)
            self._weights = {i: (w, Q)}  # one weight at a time keeps workers small
        return self._weights[i]

    def shift(self, m, n, strategy, seed):
        return build_shift(self.lat, self.mu, self.sys_mu, m, n, strategy, seed)


_WORKER_CTX: _Context | None = None


def _init_worker(cfg: RunConfig):
    global _WORKER_CTX
    _WORKER_CTX = _Context(cfg)


def _run_tasks(ctx: _Context, fn, tasks):
    """Run ``fn(task)`` over ``tasks`` and return the results in task order."""
    global _WORKER_CTX
    cfg = ctx.cfg
    if cfg.threads == 1 or len(tasks) <= 1:
        _WORKER_CTX = ctx
        return [fn(task) for task in tasks]
    chunk = max(1, len(tasks) // (4 * cfg.threads))
    with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_init_worker, initargs=(cfg,)) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------- sweep

def _sweep_tasks(ctx: _Context):
    sh = ctx.cfg.shifts
    return [(wi, m, n, strat, seed)
            for wi in range(len(ctx.points))
            for (m, n) in sh.pairs
            for strat in sh.strategies
            for seed in sh.seeds]


def _sweep_point(task) -> dict:
    ctx = _WORKER_CTX
    cfg = ctx.cfg
    wi, m, n, strat, seed = task
    spec, param, wseed = ctx.points[wi]
    row = {"latticeKind": ctx.lat.kind, "depth": ctx.lat.depth, "weightFamily": spec.family,
           "weightParam": param, "seed": seed, "m": m, "n": n, "strategy": strat,
           "weightSeed": wseed}
    try:
        w, Q = ctx.weight(wi)
        row["a2"] = Q
        t0 = time.perf_counter()
        S = ctx.shift(m, n, strat, seed)
        res = weighted_norm(S, w, method=cfg.norm.method, tol=cfg.norm.tol,
                            max_iter=cfg.norm.max_iter, seed=cfg.seed)
        ms = (time.perf_counter() - t0) * 1e3 if cfg.norm.timing else 0.0
        N = m + n + 1
        row.update(norm=res.value, method=res.method, residual=res.residual, wallTimeMs=ms,
                   iterations=res.iterations, converged=res.converged, ratioQ=res.value / Q,
                   error="")
        for col, k in RATIO_POWERS.items():
            row[col] = res.value / (N ** k * Q)
    except (DyadicLabError, ArithmeticError, ValueError, MemoryError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def loglog_slope(x, y) -> float | None:
    """Least-squares slope of log y against log x; None with fewer than two distinct x."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    ok = (x > 0) & (y > 0)
    x, y = x[ok], y[ok]
    if np.unique(x).size < 2:
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def sup_series(rows):
    """Sup-over-shifts norms: {(m, n): [(weight key, Q, norm)]} and {weight key: {N: (Q, norm)}}."""
    by_mn: dict = defaultdict(dict)
    by_w: dict = defaultdict(dict)
    for r in rows:
        if r.get("error") or r.get("norm") is None:
            continue
        wkey = (r["weightFamily"], r["weightParam"], r["weightSeed"])
        mn = (r["m"], r["n"])
        Q, v = r["a2"], r["norm"]
        prev = by_mn[mn].get(wkey)
        if prev is None or v > prev[1]:
            by_mn[mn][wkey] = (Q, v)
        N = r["m"] + r["n"] + 1
        prev = by_w[wkey].get(N)
        if prev is None or v > prev[1]:
            by_w[wkey][N] = (Q, v)
    return by_mn, by_w


def summarize(rows) -> dict:
    by_mn, by_w = sup_series(rows)
    slopes = []
    for (m, n) in sorted(by_mn):
        pts = list(by_mn[(m, n)].values())
        slopes.append({"m": m, "n": n, "points": len(pts),
                       "slope": loglog_slope([p[0] for p in pts], [p[1] for p in pts])})
    exps = []
    for wkey in sorted(by_w, key=lambda k: (k[0], k[1], k[2])):
        Ns = sorted(by_w[wkey])
        exps.append({"weightFamily": wkey[0], "weightParam": wkey[1], "weightSeed": wkey[2],
                     "a2": by_w[wkey][Ns[0]][0], "points": len(Ns),
                     "exponent": loglog_slope(Ns, [by_w[wkey][N][1] for N in Ns])})
    good = [r for r in rows if not r.get("error")]
    consts = {}
    for col in ("ratioQ", *RATIO_POWERS):
        if good:
            best = max(good, key=lambda r: r[col])
            consts[col] = {"value": best[col], "m": best["m"], "n": best["n"], "strategy": best["strategy"],
                           "weightFamily": best["weightFamily"], "weightParam": best["weightParam"]}
    fitted = [s["slope"] for s in slopes if s["slope"] is not None]
    fitted_e = [e["exponent"] for e in exps if e["exponent"] is not None]
    return _jsonable({
        "rows": len(rows),
        "failedRows": sum(1 for r in rows if r.get("error")),
        "unconverged": sum(1 for r in good if r.get("converged") is False),
        "slopes": slopes,
        "slopeRange": [min(fitted), max(fitted)] if fitted else None,
        "exponents": exps,
        "exponentMax": max(fitted_e) if fitted_e else None,
        "constants": consts,
    })


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in rows:
            wr.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])


def run_sweep(cfg: RunConfig, out_dir=None) -> tuple[list[dict], dict]:
    """Compute every grid point, write ``sweep.csv`` and ``summary.json``; returns (rows, summary)."""
    ctx = _Context(cfg)
    tasks = _sweep_tasks(ctx)
    rows = _run_tasks(ctx, _sweep_point, tasks)
    summary = summarize(rows)
    out = Path(out_dir if out_dir is not None else cfg.resolve(cfg.out))
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return rows, summary


# ---------------------------------------------------------------- checks

def _suite_of_final(check: str) -> str:
    if check.startswith(("sbor.", "stopping.")):
        return "sbor"
    if check.startswith("carl1."):
        return "carl1"
    return "final"


def _compact(rec: CheckRecord, context: dict) -> dict:
    d = rec.to_dict()
    d["context"] = context
    return d


def _weight_checks(task):
    ctx = _WORKER_CTX
    cfg = ctx.cfg
    wi = task
    suites = set(cfg.checks.suites)
    w, Q = ctx.weight(wi)
    spec, param, wseed = ctx.points[wi]
    context = {"weightFamily": spec.family, "weightParam": param, "weightSeed": wseed, "a2": Q}
    out = []
    if suites & {"decomp", "linfty"}:
        sys_w = build_haar(ctx.lat, ctx.mu.weighted(w))
        rep = decomp_check(w, ctx.sys_mu, sys_w)
        for r in rep.records:
            suite = "linfty" if r.check.startswith("haar.") else "decomp"
            if suite in suites:
                out.append((suite, _compact(r, context)))
    if "uval" in suites:
        rep = uval_check(w, cfg.alpha, cfg.checks.c_alpha, ctx.sys_mu)
        out += [("uval", _compact(r, context)) for r in rep.records]
    if "taylor" in suites:
        lat = ctx.lat
        top = min(cfg.checks.taylor_generations, lat.depth - 1)
        for q in range(int(lat.level_start[top + 1])):
            try:
                rep = taylor_segment_check(q, w, cfg.alpha, Q)
                out += [("taylor", _compact(r, {**context, "cube": q})) for r in rep.records]
            except DyadicLabError as e:
                rec = CheckRecord("taylor.domain", False, detail=str(e))
                out.append(("taylor", _compact(rec, {**context, "cube": q})))
    return out


def _instance_checks(task):
    ctx = _WORKER_CTX
    cfg = ctx.cfg
    wi, m, n, strat, seed, inst = task
    suites = set(cfg.checks.suites)
    w, Q = ctx.weight(wi)
    spec, param, wseed = ctx.points[wi]
    S = ctx.shift(m, n, strat, seed)
    if cfg.checks.corrupt_coefficient:
        coef = S.coef.copy()
        coef[0] = 2.0 * S.bound()[0]
        S = S.with_coefficients(coef)
    context = {"weightFamily": spec.family, "weightParam": param, "weightSeed": wseed, "a2": Q,
               "m": m, "n": n, "strategy": strat, "seed": seed, "instance": inst}
    out = []
    if "admissibility" in suites:
        b = S.bound()
        ratio = float(np.max(np.abs(S.coef) / b)) if S.n_entries else 0.0
        rec = CheckRecord("admissibility", S.admissible(), ratio, 1.0)
        out.append(("admissibility", _compact(rec, context)))
    if not suites & {"sbor", "carl1", "final", "terms"}:
        return out
    rng = np.random.default_rng([cfg.seed, wi, m, n, seed, inst])
    phi = rng.standard_normal(ctx.lat.n_cells)
    psi = rng.standard_normal(ctx.lat.n_cells)
    if "terms" in suites:
        rep = term_check(S, phi, psi, w, cfg.alpha)
        out += [("terms", _compact(r, context)) for r in rep.records]
    if suites & {"sbor", "carl1", "final"}:
        if max(m, n) >= ctx.lat.depth:
            return out
        rep = final_bounds(S, phi, psi, w, cfg.alpha)
        for r in rep.records:
            suite = _suite_of_final(r.check)
            if suite in suites:
                out.append((suite, _compact(r, context)))
    return out


def _sublemma_records(cfg: RunConfig):
    out = []
    for i, Q in enumerate(cfg.checks.sublemma_Q):
        rep = bellman_hessian_check(cfg.alpha, Q, cfg.checks.sublemma_samples, seed=cfg.seed + i)
        out += [("sublemma", _compact(r, {"Q": Q, "alpha": cfg.alpha})) for r in rep.records]
    return out


def _aggregate(records, suites) -> dict:
    res = {s: {"passed": True, "records": 0, "failures": 0, "worst": None, "checks": {}} for s in suites}
    failures = []
    for suite, rec in records:
        s = res[suite]
        s["records"] += 1
        c = s["checks"].setdefault(rec["check"], {"count": 0, "failures": 0, "worst_ratio": None})
        c["count"] += 1
        ratio = rec["ratio"] if isinstance(rec["ratio"], float) and math.isfinite(rec["ratio"]) else None
        if ratio is not None and (c["worst_ratio"] is None or ratio > c["worst_ratio"]):
            c["worst_ratio"] = ratio
        if ratio is not None and (s["worst"] is None or ratio > s["worst"]["ratio"]):
            s["worst"] = rec
        if not rec["passed"]:
            s["passed"] = False
            s["failures"] += 1
            c["failures"] += 1
            if len(failures) < 100:
                failures.append({"suite": suite, **rec})
    return res, failures


def run_checks(cfg: RunConfig, out_dir=None) -> dict:
    """Run the selected suites over the grid and write ``checks.json``."""
    suites = tuple(s for s in cfg.checks.suites)
    records = []
    if suites:
        ctx = _Context(cfg)
        if set(suites) & {"decomp", "linfty", "uval", "taylor"}:
            for part in _run_tasks(ctx, _weight_checks, list(range(len(ctx.points)))):
                records += part
        if set(suites) & {"sbor", "carl1", "final", "terms", "admissibility"}:
            sh = cfg.shifts
            tasks = [(wi, m, n, strat, seed, inst)
                     for wi in range(len(ctx.points))
                     for (m, n) in sh.pairs
                     for strat in sh.strategies
                     for seed in sh.seeds
                     for inst in range(cfg.checks.instances)]
            for part in _run_tasks(ctx, _instance_checks, tasks):
                records += part
        if "sublemma" in suites:
            records += _sublemma_records(cfg)
    per_suite, failures = _aggregate(records, suites)
    report = _jsonable({
        "passed": all(s["passed"] for s in per_suite.values()),
        "suites": per_suite,
        "failures": failures,
        "alpha": cfg.alpha,
        "seed": cfg.seed,
    })
    out = Path(out_dir if out_dir is not None else cfg.resolve(cfg.out))
    out.mkdir(parents=True, exist_ok=True)
    (out / "checks.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def config_snapshot(cfg: RunConfig) -> dict:
    return _jsonable(asdict(cfg))


# ---------------------------------------------------------------- plots

_NUMERIC = {"depth": int, "weightParam": float, "seed": int, "m": int, "n": int, "a2": float,
            "norm": float, "weightSeed": int}


def read_sweep_csv(path) -> list[dict]:
    """Parse a sweep CSV; rows carrying an error are kept with ``norm`` None."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: row 1: file is empty") from None
        need = [c for c in ("weightFamily", "weightParam", "m", "n", "strategy", "a2", "norm") if c not in header]
        if need:
            raise CsvParseError(f"{path}: row 1: missing column(s) {need}")
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise CsvParseError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(raw)}")
            r = dict(zip(header, raw))
            if r.get("error"):
                r["norm"] = None
                rows.append(r)
                continue
            for col, typ in _NUMERIC.items():
                if col not in r:
                    continue
                try:
                    r[col] = typ(r[col])
                except ValueError:
                    raise CsvParseError(f"{path}: row {lineno}: column {col!r} has bad value {r[col]!r}") from None
            r.setdefault("weightSeed", 0)
            rows.append(r)
    return rows


def emit_plots(csv_path, out_dir=None) -> list[Path]:
    """Log-log plots of norm vs Q per (m, n) and norm vs m+n+1 per weight, as SVG files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_sweep_csv(csv_path)
    out = Path(out_dir) if out_dir is not None else Path(csv_path).parent
    out.mkdir(parents=True, exist_ok=True)
    by_mn, by_w = sup_series(rows)
    written = []
    style = {"svg.fonttype": "none", "svg.hashsalt": "dyadiclab"}

    def draw(x, y, xlabel, title, fname):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        with plt.rc_context(style):
            fig, ax = plt.subplots(figsize=(5, 4))
            ax.loglog(x, y, "o")
            k = loglog_slope(x, y)
            if k is not None:
                ok = (x > 0) & (y > 0)
                c = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[1]
                xs = np.geomspace(x[ok].min(), x[ok].max(), 50)
                ax.loglog(xs, np.exp(c) * xs ** k, "-")
                title += f"  slope = {k!r}"
            ax.set_xlabel(xlabel)
            ax.set_ylabel("norm")
            ax.set_title(title, fontsize=8)
            path = out / fname
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
        written.append(path)

    for (m, n) in sorted(by_mn):
        pts = list(by_mn[(m, n)].values())
        draw([p[0] for p in pts], [p[1] for p in pts], "[w]_A2", f"m={m} n={n}", f"norm_vs_Q_m{m}_n{n}.svg")
    for i, wkey in enumerate(sorted(by_w)):
        Ns = sorted(by_w[wkey])
        fam, par, ws = wkey
        draw(Ns, [by_w[wkey][N][1] for N in Ns], "m+n+1", f"{fam} {par!r} seed {ws}",
             f"norm_vs_N_{i:03d}_{fam}.svg")
    return written
