"""Compiled kernels vs the numpy fallback, timed through the public API.

    python benchmarks/bench_kernels.py                 # depths 10, 14, 16
    python benchmarks/bench_kernels.py --depths 12 --json bench.json

Each operation runs on both backends with identical inputs; the outputs are
compared before timing so a speedup never hides a wrong answer.
"""
import argparse
import json
import timeit

import numpy as np

from dyadiclab import kernels
from dyadiclab.haar import build_haar, forward_transform, inverse_transform
from dyadiclab.lattice import build_interval_lattice
from dyadiclab.measure import lebesgue, power_weight
from dyadiclab.norms import carleson_constant, maximal_function, weighted_norm
from dyadiclab.shift import apply, build_shift


def _operations(depth):
    lat = build_interval_lattice(depth)
    mu = lebesgue(lat)
    H = build_haar(lat, mu)
    S = build_shift(lat, mu, H, 2, 2, "random-sign", seed=0)
    w = power_weight(0.8, lat)
    rng = np.random.default_rng(depth)
    f = rng.normal(size=lat.n_cells)
    c = forward_transform(f, H)
    seq = rng.uniform(size=lat.n_cubes)
    return {
        "haar forward": lambda: forward_transform(f, H).values,
        "haar inverse": lambda: inverse_transform(c, H),
        "shift apply (2,2)": lambda: apply(S, f),
        "maximal function": lambda: maximal_function(np.abs(f), mu),
        "carleson constant": lambda: np.array(carleson_constant(seq, lat, mu)[:1]),
        "weighted norm (power it.)": lambda: np.array([weighted_norm(S, w, method="power-iteration",
                                                                     max_iter=50).value]),
    }


def _best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def run(depths, repeat):
    backends = kernels.available_backends()
    prev = kernels.BACKEND
    results = []
    try:
        for depth in depths:
            ops = _operations(depth)
            for name, fn in ops.items():
                row = {"depth": depth, "cells": 2 ** depth, "operation": name}
                outputs = {}
                for b in backends:
                    kernels.set_backend(b)
                    outputs[b] = fn()
                    row[b] = _best_of(fn, repeat)
                if len(backends) == 2:
                    ref = outputs["python"]
                    diff = np.abs(outputs["compiled"] - ref).max() / max(np.abs(ref).max(), 1e-300)
                    row["max rel diff"] = float(diff)
                    row["speedup"] = row["python"] / row["compiled"]
                results.append(row)
    finally:
        kernels.set_backend(prev)
    return backends, results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depths", type=int, nargs="+", default=[10, 14, 16])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    backends, results = run(args.depths, args.repeat)
    if len(backends) == 1:
        print("compiled kernels are not built; only the fallback is timed")
    head = f"{'depth':>5} {'operation':<27}" + "".join(f"{b + ' ms':>13}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>9} {'rel diff':>10}"
    print(head)
    for r in results:
        line = f"{r['depth']:>5} {r['operation']:<27}" + "".join(f"{r[b] * 1e3:>13.3f}" for b in backends)
        if len(backends) == 2:
            line += f"{r['speedup']:>8.1f}x {r['max rel diff']:>10.1e}"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backends": list(backends), "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
