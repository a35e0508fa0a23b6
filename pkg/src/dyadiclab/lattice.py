"""Finite dyadic lattices: the binary lattice on [0,1) and Christ-type cubes.

A lattice is stored as flat arrays over cube ids. Ids are breadth-first,
so generation ``k`` occupies ``level_start[k]:level_start[k+1]``, the sons
of a cube are contiguous, and a parent always has a smaller id than its
sons. Finest cells are the cubes of the last generation, numbered left to
right, and every cube covers the contiguous cell range ``[lo, hi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .errors import DegenerateMetric, InvalidArgument
from .report import VerificationReport

MAX_INTERVAL_DEPTH = 24


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """A finite metric space given by its distance table."""

    dist: np.ndarray
    kind: str = "explicit-distance-matrix"
    coords: np.ndarray | None = None

    @classmethod
    def from_points(cls, coords) -> "MetricSpace":
        x = np.asarray(coords, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] == 0:
            raise InvalidArgument("empty point cloud")
        kind = "interval" if x.shape[1] == 1 else "euclidean-point-cloud"
        return cls(cdist(x, x), kind, x)

    @classmethod
    def from_distance_matrix(cls, dist) -> "MetricSpace":
        d = np.asarray(dist, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidArgument("distance matrix must be square")
        if d.shape[0] == 0:
            raise InvalidArgument("empty distance matrix")
        if np.any(np.diag(d) != 0) or np.any(d < 0) or not np.array_equal(d, d.T):
            raise InvalidArgument("distance matrix must be symmetric, nonnegative, zero on the diagonal")
        return cls(d)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @property
    def dimension(self) -> int | None:
        return None if self.coords is None else self.coords.shape[1]

    def check_triangle(self, rtol=1e-12) -> bool:
        d = self.dist
        for k in range(self.n):
            if np.any(d > d[:, k, None] + d[None, k, :] + rtol * self.diameter):
                return False
        return True


class Cube(NamedTuple):
    id: int
    generation: int
    parent: int | None
    sons: tuple
    cells: range
    diameter: float
    center: int
    inradius: float


@dataclass(frozen=True, eq=False)
class Lattice:
    kind: str
    depth: int
    delta: float
    gen: np.ndarray
    parent: np.ndarray
    son_start: np.ndarray
    son_count: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level_start: np.ndarray
    diameter: np.ndarray
    inradius: np.ndarray
    center: np.ndarray
    max_sons: int
    cell_points: tuple | None = None
    space: MetricSpace | None = field(default=None, repr=False)

    @property
    def n_cubes(self) -> int:
        return self.parent.shape[0]

    @property
    def n_cells(self) -> int:
        return int(self.hi[0])

    @property
    def leaf_offset(self) -> int:
        return int(self.level_start[self.depth])

    @property
    def measured_max_sons(self) -> int:
        return int(self.son_count.max())

    @property
    def almost_ball_constant(self) -> float:
        ok = self.diameter > 0
        if not ok.any():
            return 1.0
        return float((self.inradius[ok] / self.diameter[ok]).min())

    def level(self, k: int) -> range:
        return range(int(self.level_start[k]), int(self.level_start[k + 1]))

    def sons(self, q: int) -> range:
        s = int(self.son_start[q])
        return range(s, s + int(self.son_count[q]))

    def cells(self, q: int) -> range:
        return range(int(self.lo[q]), int(self.hi[q]))

    def is_terminal(self, q: int) -> bool:
        return self.son_count[q] == 0

    def cube(self, q: int) -> Cube:
        p = int(self.parent[q])
        return Cube(q, int(self.gen[q]), None if p < 0 else p, tuple(self.sons(q)),
                    self.cells(q), float(self.diameter[q]), int(self.center[q]),
                    float(self.inradius[q]))

    def cube_sums(self, x) -> np.ndarray:
        """Sum of a per-cell array over every cube."""
        vals = np.zeros(self.n_cubes)
        vals[self.leaf_offset:] = x
        return kernels.subtree_sums(vals, self.parent, self.level_start)

    def cube_of_cells(self, k: int) -> np.ndarray:
        """Id of the generation-``k`` cube containing each cell."""
        ids = np.asarray(self.level(k), dtype=np.int64)
        return np.repeat(ids, self.hi[ids] - self.lo[ids])

    def broadcast(self, values_on_level, k: int) -> np.ndarray:
        ids = np.asarray(self.level(k), dtype=np.int64)
        return np.repeat(np.asarray(values_on_level), self.hi[ids] - self.lo[ids])


def _tree_arrays(parent, level_sizes):
    level_start = np.concatenate([[0], np.cumsum(level_sizes)]).astype(np.int64)
    nc = parent.shape[0]
    son_count = np.bincount(parent[1:], minlength=nc).astype(np.int64)
    son_start = np.zeros(nc, dtype=np.int64)
    first = np.full(nc, nc, dtype=np.int64)
    np.minimum.at(first, parent[1:], np.arange(1, nc))
    son_start[:] = np.where(son_count > 0, first, 0)
    gen = np.repeat(np.arange(len(level_sizes)), level_sizes).astype(np.int64)
    return level_start, son_start, son_count, gen


def build_interval_lattice(depth: int) -> Lattice:
    """Binary lattice of half-open dyadic intervals of [0,1)."""
    if not isinstance(depth, (int, np.integer)) or not 1 <= depth <= MAX_INTERVAL_DEPTH:
        raise InvalidArgument(f"depth must be an integer in [1, {MAX_INTERVAL_DEPTH}], got {depth!r}")
    depth = int(depth)
    nc = 2 ** (depth + 1) - 1
    ids = np.arange(nc, dtype=np.int64)
    parent = (ids - 1) // 2
    parent[0] = -1
    level_start, son_start, son_count, gen = _tree_arrays(parent, [2 ** k for k in range(depth + 1)])
    idx_in_level = ids - (2 ** gen - 1)
    width = 2 ** (depth - gen)
    lo = idx_in_level * width
    hi = lo + width
    ncell = 2 ** depth
    length = width / ncell
    # radius of the largest relative ball of [0,1) inside the cube
    inradius = np.where((lo == 0) | (hi == ncell), length, length / 2)
    inradius[0] = 1.0
    return Lattice(
        kind="interval", depth=depth, delta=0.5, gen=gen, parent=parent,
        son_start=son_start, son_count=son_count, lo=lo, hi=hi,
        level_start=level_start, diameter=length, inradius=inradius,
        center=(lo + hi) // 2, max_sons=2,
    )


def _greedy_nets(dist, delta, depth, start):
    """Nested maximal nets; level k is (delta**k * diam)-separated."""
    n = dist.shape[0]
    diam = dist.max()
    order = np.roll(np.arange(n), -start)
    in_net = np.zeros(n, dtype=bool)
    mind = np.full(n, np.inf)
    nets = {}
    for k in range(1, depth + 1):
        r = delta ** k * diam
        for p in order:
            if not in_net[p] and mind[p] >= r:
                in_net[p] = True
                np.minimum(mind, dist[p], out=mind)
        nets[k] = np.flatnonzero(in_net)
    return nets


def build_christ_lattice(space: MetricSpace, delta: float = 0.5, depth: int = 3, seed: int = 0) -> Lattice:
    """Christ-type cubes from nested greedy nets.

    Level-``k`` centres form a maximal ``delta**k * diam``-separated net
    built greedily in ascending index order starting at ``seed % n``; each
    net contains the previous one. Every point goes to its nearest finest
    centre, and every centre of level ``k+1`` hangs under its nearest
    level-``k`` centre (ties to the lower index), which makes the
    partitions nest. Level 0 is the whole space.
    """
    if space is None or space.n == 0:
        raise InvalidArgument("empty metric space")
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    if not isinstance(depth, (int, np.integer)) or not 1 <= depth <= MAX_INTERVAL_DEPTH:
        raise InvalidArgument(f"depth must be an integer in [1, {MAX_INTERVAL_DEPTH}]")
    depth = int(depth)
    n = space.n
    dist = space.dist
    if n > 1 and space.diameter <= 0:
        raise DegenerateMetric("all points coincide")
    start = int(seed) % n
    nets = _greedy_nets(dist, delta, depth, start)

    # labels[k][p] = centre of the level-k cube containing p
    labels = {depth: nets[depth][np.argmin(dist[:, nets[depth]], axis=1)]}
    for k in range(depth - 1, 0, -1):
        up = np.full(n, -1, dtype=np.int64)
        up[nets[k + 1]] = nets[k][np.argmin(dist[np.ix_(nets[k + 1], nets[k])], axis=1)]
        labels[k] = up[labels[k + 1]]
    labels[0] = np.full(n, start, dtype=np.int64)

    # breadth-first ids, sons ordered by centre index
    idmap = {0: np.full(n, -1, dtype=np.int64)}
    idmap[0][start] = 0
    centers = [np.array([start])]
    parents = [np.array([-1])]
    next_id = 1
    for k in range(1, depth + 1):
        cen = np.unique(labels[k])
        par_ids = idmap[k - 1][labels[k - 1][cen]]
        perm = np.lexsort((cen, par_ids))
        cen, par_ids = cen[perm], par_ids[perm]
        m = np.full(n, -1, dtype=np.int64)
        m[cen] = np.arange(next_id, next_id + len(cen))
        idmap[k] = m
        centers.append(cen)
        parents.append(par_ids)
        next_id += len(cen)
    parent = np.concatenate(parents).astype(np.int64)
    center = np.concatenate(centers).astype(np.int64)
    level_sizes = [len(c) for c in centers]
    level_start, son_start, son_count, gen = _tree_arrays(parent, level_sizes)

    nc = parent.shape[0]
    leaf0 = int(level_start[depth])
    ncell = nc - leaf0
    cell_of_point = idmap[depth][labels[depth]] - leaf0
    point_order = np.argsort(cell_of_point, kind="stable")
    cell_sizes = np.bincount(cell_of_point, minlength=ncell)
    pstart = np.concatenate([[0], np.cumsum(cell_sizes)])
    cell_points = tuple(point_order[pstart[c]:pstart[c + 1]] for c in range(ncell))

    lo = np.zeros(nc, dtype=np.int64)
    hi = np.zeros(nc, dtype=np.int64)
    lo[leaf0:] = np.arange(ncell)
    hi[leaf0:] = np.arange(1, ncell + 1)
    for k in range(depth - 1, -1, -1):
        for q in range(int(level_start[k]), int(level_start[k + 1])):
            s = int(son_start[q])
            lo[q] = lo[s]
            hi[q] = hi[s + int(son_count[q]) - 1]

    diameter = np.zeros(nc)
    inradius = np.zeros(nc)
    for q in range(nc):
        mem = point_order[pstart[lo[q]]:pstart[hi[q]]]
        diameter[q] = dist[np.ix_(mem, mem)].max()
        if len(mem) == n:
            inradius[q] = space.diameter
        else:
            outside = np.ones(n, dtype=bool)
            outside[mem] = False
            inradius[q] = dist[np.ix_(mem, np.flatnonzero(outside))].min(axis=1).max()

    dim = space.dimension
    if space.kind in ("interval", "euclidean-point-cloud") and dim is not None:
        bound = int(math.floor((1 + 2 / delta) ** dim + 1e-9))
    else:
        bound = int(son_count.max())
    return Lattice(
        kind="christ", depth=depth, delta=float(delta), gen=gen, parent=parent,
        son_start=son_start, son_count=son_count, lo=lo, hi=hi,
        level_start=level_start, diameter=diameter, inradius=inradius,
        center=center, max_sons=max(bound, 1), cell_points=cell_points, space=space,
    )


def descendants_at(lat: Lattice, q: int, offset: int) -> np.ndarray:
    """Ids of the cubes J inside ``q`` with g(J) = g(q) + offset, left to right."""
    g = int(lat.gen[q])
    if offset < 0 or g + offset > lat.depth:
        raise InvalidArgument(f"offset {offset} out of range for cube of generation {g}")
    lvl = lat.level(g + offset)
    lo_lvl = lat.lo[lvl.start:lvl.stop]
    a = np.searchsorted(lo_lvl, lat.lo[q], side="left")
    b = np.searchsorted(lo_lvl, lat.hi[q], side="left")
    return np.arange(lvl.start + a, lvl.start + b, dtype=np.int64)


def verify_lattice(lat: Lattice) -> VerificationReport:
    """Check the lattice axioms; failures are report entries, never exceptions."""
    rep = VerificationReport("verify_lattice", info={"kind": lat.kind, "depth": lat.depth, "delta": lat.delta})
    ncell = lat.n_cells
    all_cells = np.arange(ncell)

    ok_part = True
    for k in range(lat.depth + 1):
        ids = np.asarray(lat.level(k))
        cells = np.concatenate([np.arange(lat.lo[q], lat.hi[q]) for q in ids])
        if cells.shape[0] != ncell or not np.array_equal(np.sort(cells), all_cells):
            ok_part = False
            rep.add("partition", False, detail=f"level {k} is not a partition of the cells")
    if ok_part:
        rep.add("partition", True)
    if len(lat.level(0)) != 1 or lat.lo[0] != 0 or lat.hi[0] != ncell:
        rep.add("root", False, detail="generation 0 must be a single cube covering every cell")

    # nesting is checked from the parent links alone
    kids: dict[int, list[int]] = {}
    for q in range(1, lat.n_cubes):
        kids.setdefault(int(lat.parent[q]), []).append(q)
    bad = []
    for q in range(lat.n_cubes):
        ch = kids.get(q, [])
        if lat.gen[q] == lat.depth:
            if ch:
                bad.append(q)
            continue
        if not ch:
            bad.append(q)
            continue
        cells = np.concatenate([np.arange(lat.lo[s], lat.hi[s]) for s in ch])
        if (cells.shape[0] != lat.hi[q] - lat.lo[q]
                or not np.array_equal(np.sort(cells), np.arange(lat.lo[q], lat.hi[q]))
                or any(lat.gen[s] != lat.gen[q] + 1 for s in ch)):
            bad.append(q)
    rep.add("nesting", not bad, lhs=len(bad), rhs=0,
            detail="" if not bad else f"cubes {bad[:10]} are not the disjoint union of their sons")

    measured = int(max((len(v) for v in kids.values()), default=0))
    rep.le("bounded_branching", measured, lat.max_sons, rtol=0)
    rep.info["measured_max_sons"] = measured
    rep.info["max_sons_bound"] = lat.max_sons

    c = lat.almost_ball_constant
    rep.add("almost_ball", c > 0, lhs=c, rhs=0)
    rep.info["almost_ball_constant"] = c

    nonroot = np.arange(1, lat.n_cubes)
    par = lat.parent[nonroot]
    mono = lat.diameter[nonroot] <= lat.diameter[par] * (1 + 1e-12) + 1e-300
    rep.add("diameter_monotone", bool(mono.all()), lhs=int((~mono).sum()), rhs=0)

    ratios = []
    for k in range(1, lat.depth + 1):
        prev = lat.diameter[np.asarray(lat.level(k - 1))].max()
        cur = lat.diameter[np.asarray(lat.level(k))].max()
        ratios.append(cur / prev if prev > 0 else math.nan)
    r = np.array(ratios)
    fin = r[np.isfinite(r)]
    rep.info["diameter_decay"] = {
        "per_level_max_ratio": [float(x) for x in r],
        "mean": float(fin.mean()) if fin.size else math.nan,
        "min": float(fin.min()) if fin.size else math.nan,
        "max": float(fin.max()) if fin.size else math.nan,
        "delta": lat.delta,
    }

    if lat.cell_points is not None and lat.space is not None:
        pts = np.concatenate(lat.cell_points)
        ok = pts.shape[0] == lat.space.n and np.array_equal(np.sort(pts), np.arange(lat.space.n))
        rep.add("points_partition", ok)
    return rep
