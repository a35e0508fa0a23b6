"""CSV and JSON import/export."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .haar import HaarSystem
from .lattice import Lattice, MetricSpace
from .measure import Measure, Weight


def read_points_csv(path) -> MetricSpace:
    """One point per row, coordinates as columns; a non-numeric first row is a header."""
    rows = _read_numeric_rows(path)
    return MetricSpace.from_points(np.array(rows, dtype=np.float64))


def read_distance_csv(path) -> MetricSpace:
    rows = _read_numeric_rows(path)
    return MetricSpace.from_distance_matrix(np.array(rows, dtype=np.float64))


def _read_numeric_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise InvalidArgument(f"{path}: row {lineno} is not numeric: {row!r}") from None
    if not rows:
        raise InvalidArgument(f"{path}: no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise InvalidArgument(f"{path}: rows have different lengths {sorted(width)}")
    return rows


def write_weight_csv(w: Weight, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["cell", "value"])
        for i, v in enumerate(w.cell_value):
            wr.writerow([i, repr(float(v))])


def read_weight_csv(path, mu: Measure) -> Weight:
    rows = _read_numeric_rows(path)
    vals = np.empty(mu.lattice.n_cells)
    seen = np.zeros(mu.lattice.n_cells, dtype=bool)
    for r in rows:
        if len(r) != 2:
            raise InvalidArgument(f"{path}: expected (cell, value) rows")
        i = int(r[0])
        if not 0 <= i < vals.size or r[0] != i:
            raise InvalidArgument(f"{path}: bad cell index {r[0]}")
        vals[i] = r[1]
        seen[i] = True
    if not seen.all():
        raise InvalidArgument(f"{path}: missing cells {np.flatnonzero(~seen)[:10].tolist()}")
    return Weight(mu, vals, family="file", params={"path": str(path)})


def lattice_to_dict(lat: Lattice) -> dict:
    return {
        "kind": lat.kind,
        "depth": lat.depth,
        "delta": lat.delta,
        "maxSons": lat.max_sons,
        "almostBallConstant": lat.almost_ball_constant,
        "cubes": [
            {
                "id": q,
                "generation": int(lat.gen[q]),
                "parent": None if lat.parent[q] < 0 else int(lat.parent[q]),
                "sons": list(lat.sons(q)),
                "cells": [int(lat.lo[q]), int(lat.hi[q])],
                "diameter": float(lat.diameter[q]),
                "center": int(lat.center[q]),
                "inradius": float(lat.inradius[q]),
            }
            for q in range(lat.n_cubes)
        ],
        "cellPoints": None if lat.cell_points is None else [p.tolist() for p in lat.cell_points],
    }


def haar_to_dict(sys: HaarSystem) -> dict:
    return {
        "functions": [
            {"cube": int(sys.cube[k]), "index": int(sys.index[k]), "sonValues": sys.son_values(k).tolist()}
            for k in range(sys.n_functions)
        ]
    }


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_dense_csv(A: np.ndarray, path):
    np.savetxt(path, A, delimiter=",", fmt="%.17g")
