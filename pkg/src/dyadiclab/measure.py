"""Measures and weights on a lattice.

Both are stored as one strictly positive value per finest cell. A weight's
cell value is its exact average over the cell, so every cube average is an
exact integral of the underlying continuum weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument, NotIntegrable
from .lattice import Lattice


@dataclass(frozen=True, eq=False)
class Measure:
    lattice: Lattice
    cell_mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.cell_mass, dtype=np.float64)
        if m.shape != (self.lattice.n_cells,):
            raise InvalidArgument(f"need {self.lattice.n_cells} cell masses, got shape {m.shape}")
        if not np.all(m > 0) or not np.all(np.isfinite(m)):
            raise InvalidArgument("cell masses must be finite and strictly positive")
        object.__setattr__(self, "cell_mass", m)

    @cached_property
    def cube_mass(self) -> np.ndarray:
        return self.lattice.cube_sums(self.cell_mass)

    @property
    def total(self) -> float:
        return float(self.cube_mass[0])

    def average(self, f) -> np.ndarray:
        """Per-cube averages of the cell function ``f``."""
        return self.lattice.cube_sums(np.asarray(f, dtype=np.float64) * self.cell_mass) / self.cube_mass

    def integral(self, f) -> float:
        return float(np.dot(f, self.cell_mass))

    def weighted(self, w) -> "Measure":
        """The measure w dμ."""
        vals = w.cell_value if isinstance(w, Weight) else np.asarray(w, dtype=np.float64)
        return Measure(self.lattice, vals * self.cell_mass)


def lebesgue(lat: Lattice) -> Measure:
    """Normalized cell counting; Lebesgue measure on the interval lattice."""
    return Measure(lat, np.full(lat.n_cells, 1.0 / lat.n_cells))


def counting(lat: Lattice) -> Measure:
    """Number of points per finest cell (Christ lattices); one per cell otherwise."""
    if lat.cell_points is None:
        return Measure(lat, np.ones(lat.n_cells))
    return Measure(lat, np.array([len(p) for p in lat.cell_points], dtype=np.float64))


def default_measure(lat: Lattice) -> Measure:
    return lebesgue(lat) if lat.kind == "interval" else counting(lat)


@dataclass(frozen=True, eq=False)
class Weight:
    mu: Measure
    cell_value: np.ndarray
    family: str = "custom"
    params: dict | None = None
    # the weight this one is the reciprocal of, so dual_weight is an exact involution
    dual_of: "Weight | None" = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.cell_value, dtype=np.float64)
        if v.shape != (self.mu.lattice.n_cells,):
            raise InvalidArgument(f"need {self.mu.lattice.n_cells} cell values, got shape {v.shape}")
        if not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise InvalidArgument("weight values must be finite and strictly positive")
        object.__setattr__(self, "cell_value", v)

    @property
    def lattice(self) -> Lattice:
        return self.mu.lattice

    @cached_property
    def mass(self) -> np.ndarray:
        """w(Q) for every cube."""
        return self.lattice.cube_sums(self.cell_value * self.mu.cell_mass)

    @cached_property
    def averages(self) -> np.ndarray:
        return self.mass / self.mu.cube_mass

    def scaled(self, t: float) -> "Weight":
        return Weight(self.mu, t * self.cell_value, self.family, self.params)


def dual_weight(w: Weight) -> Weight:
    """σ = 1/w, cell by cell."""
    if w.dual_of is not None:
        return w.dual_of
    return Weight(w.mu, 1.0 / w.cell_value, family=f"dual:{w.family}", params=w.params, dual_of=w)


def constant_weight(mu: Measure, c: float = 1.0) -> Weight:
    return Weight(mu, np.full(mu.lattice.n_cells, float(c)), family="constant", params={"c": c})


def a2_characteristic(w: Weight, sigma: Weight | None = None) -> tuple[float, int]:
    """[w]_{A2} over lattice cubes and a cube attaining it."""
    sigma = dual_weight(w) if sigma is None else sigma
    prod = w.averages * sigma.averages
    q = int(np.argmax(prod))
    return float(prod[q]), q


def oscillations(w: Weight) -> np.ndarray:
    """Δ_Q w for every cube (0 on terminal cubes)."""
    lat = w.lattice
    avg = w.averages
    sons = np.arange(1, lat.n_cubes)
    dev = np.abs(avg[sons] - avg[lat.parent[sons]])
    return np.bincount(lat.parent[sons], weights=dev, minlength=lat.n_cubes)


def oscillation(w: Weight, q: int) -> float:
    """Δ_I w = Σ over sons s of |<w>_s - <w>_I|."""
    lat = w.lattice
    if lat.is_terminal(q):
        raise InvalidArgument(f"cube {q} is terminal; it has no sons")
    avg = w.averages
    s = lat.sons(q)
    return float(np.abs(avg[s.start:s.stop] - avg[q]).sum())


def doubling_constant(mu: Measure) -> tuple[float, float]:
    """Max of μ(parent)/μ(son) over all pairs, and the min son fraction c₁."""
    lat = mu.lattice
    sons = np.arange(1, lat.n_cubes)
    if sons.size == 0:
        return 1.0, 1.0
    frac = mu.cube_mass[sons] / mu.cube_mass[lat.parent[sons]]
    c1 = float(frac.min())
    return 1.0 / c1, c1


def _power_cell_average(a, b, gamma, x0):
    """Exact mean of |x - x0|**gamma over [a, b) (elementwise)."""
    if gamma == 0.0:
        return np.ones_like(a)  # exact, rather than 1 up to rounding
    g1 = gamma + 1.0
    out = np.empty_like(a)
    right = a >= x0
    left = b <= x0
    mixed = ~(right | left)

    # one-sided cells: F(v) - F(u) = F(u) * expm1(g1 * log1p((v-u)/u)), stable for thin cells
    u, v = a[right] - x0, b[right] - x0
    out[right] = _one_sided(u, v, g1)
    u, v = x0 - b[left], x0 - a[left]
    out[left] = _one_sided(u, v, g1)
    u, v = x0 - a[mixed], b[mixed] - x0
    out[mixed] = (u ** g1 + v ** g1) / g1 / (u + v)
    return out


def _one_sided(u, v, g1):
    h = v - u
    res = np.empty_like(u)
    z = u == 0
    res[z] = v[z] ** g1 / g1 / h[z]
    nz = ~z
    un, hn = u[nz], h[nz]
    res[nz] = un ** g1 * np.expm1(g1 * np.log1p(hn / un)) / g1 / hn
    return res


def power_weight(gamma: float, lat: Lattice, x0: float = 0.0) -> Weight:
    """|x - x0|**gamma averaged exactly over each dyadic cell (Lebesgue μ)."""
    if lat.kind != "interval":
        raise InvalidArgument("power weights are defined on the interval lattice")
    if not -1 < gamma < 1:
        raise NotIntegrable(f"|x-x0|^{gamma} is not an A2 weight; need -1 < gamma < 1")
    n = lat.n_cells
    edges = np.arange(n + 1, dtype=np.float64) / n
    vals = _power_cell_average(edges[:-1], edges[1:], float(gamma), float(x0))
    return Weight(lebesgue(lat), vals, family="power", params={"gamma": float(gamma), "x0": float(x0)})


def cascade_weight(epsilon: float, seed: int, lat: Lattice, mu: Measure | None = None) -> Weight:
    """Multiplicative cascade: each son multiplies its parent's value by 1±ε.

    Signs alternate over the sons of a cube in a seeded random order, and the
    factors are rescaled so the μ-average over the sons stays equal to the
    parent's value. The cube averages of the result are the cascade values.
    """
    if not 0 <= epsilon < 1:
        raise InvalidArgument("epsilon must lie in [0, 1)")
    mu = default_measure(lat) if mu is None else mu
    rng = np.random.default_rng(seed)
    val = np.ones(lat.n_cubes)
    cm = mu.cube_mass
    for q in range(lat.leaf_offset):
        s0, ns = int(lat.son_start[q]), int(lat.son_count[q])
        if ns < 2:
            val[s0:s0 + ns] = val[q]
            continue
        signs = np.where(np.arange(ns) % 2 == 0, 1.0, -1.0)
        rng.shuffle(signs)
        f = 1.0 + epsilon * signs
        f /= np.dot(cm[s0:s0 + ns], f) / cm[q]
        val[s0:s0 + ns] = val[q] * f
    return Weight(mu, val[lat.leaf_offset:].copy(), family="cascade",
                  params={"epsilon": float(epsilon), "seed": int(seed)})
