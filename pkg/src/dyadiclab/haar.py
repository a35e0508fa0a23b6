"""Haar systems adapted to a measure ν on a lattice.

On a cube Q with sons s_0..s_{r-1} the system has r-1 functions. The j-th
one is Gram-Schmidt applied to the son indicators χ_{s_j} against the
constants and the earlier functions, which gives the closed form

    h_j = a_j on s_j,  -b_j on s_{j+1} ∪ ... ∪ s_{r-1},  0 elsewhere,

with A = ν(s_j), B = ν(s_{j+1} ∪ ...), a_j = sqrt(B / (A (A+B))) and
b_j = sqrt(A / (B (A+B))). Function j is owned by son cube s_j, so the
functions are numbered in cube-id order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .lattice import Lattice
from .measure import Measure, Weight, oscillations


@dataclass(frozen=True, eq=False)
class HaarSystem:
    lattice: Lattice
    nu: Measure
    owner: np.ndarray        # son cube owning each function
    cube: np.ndarray         # cube each function lives on
    index: np.ndarray        # j, position of the owner among the sons
    a: np.ndarray
    b: np.ndarray
    fun_of_cube: np.ndarray  # function owned by each cube, or -1

    @property
    def n_functions(self) -> int:
        return self.a.shape[0]

    @cached_property
    def offset(self) -> np.ndarray:
        """Functions of cube q are ``offset[q]:offset[q+1]``."""
        counts = np.bincount(self.cube, minlength=self.lattice.n_cubes)
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def functions_of(self, q: int) -> range:
        return range(int(self.offset[q]), int(self.offset[q + 1]))

    def son_values(self, k: int) -> np.ndarray:
        """Values of function ``k`` on the sons of its cube."""
        q, j = int(self.cube[k]), int(self.index[k])
        out = np.zeros(int(self.lattice.son_count[q]))
        out[j] = self.a[k]
        out[j + 1:] = -self.b[k]
        return out

    def function(self, k: int) -> np.ndarray:
        """Function ``k`` as a cell array."""
        lat = self.lattice
        q = int(self.cube[k])
        f = np.zeros(lat.n_cells)
        for s, v in zip(lat.sons(q), self.son_values(k)):
            f[lat.lo[s]:lat.hi[s]] = v
        return f

    def dense(self) -> np.ndarray:
        """All functions as rows of an (n_functions, n_cells) matrix."""
        lat = self.lattice
        H = np.zeros((self.n_functions, lat.n_cells))
        for k in range(self.n_functions):
            q, j = int(self.cube[k]), int(self.index[k])
            sons = lat.sons(q)
            s = sons[j]
            H[k, lat.lo[s]:lat.hi[s]] = self.a[k]
            H[k, lat.hi[s]:lat.hi[q]] = -self.b[k]
        return H

    @cached_property
    def sup_constant(self) -> float:
        """max_k ||h_k||_∞ sqrt(ν(Q_k))."""
        if self.n_functions == 0:
            return 0.0
        nq = self.nu.cube_mass[self.cube]
        return float((np.maximum(self.a, self.b) * np.sqrt(nq)).max())

    @cached_property
    def delta_constant(self) -> float:
        """max over functions and sons of |h(s)| ν(s) / sqrt(ν(Q)).

        This is the constant C in |(h, w)_ν| <= C Δ_Q w sqrt(ν(Q)).
        """
        if self.n_functions == 0:
            return 0.0
        lat, cm = self.lattice, self.nu.cube_mass
        best = 0.0
        for k in range(self.n_functions):
            q = int(self.cube[k])
            s = lat.sons(q)
            v = np.abs(self.son_values(k)) * cm[s.start:s.stop]
            best = max(best, float(v.max() / np.sqrt(cm[q])))
        return best


def build_haar(lat: Lattice, nu) -> HaarSystem:
    """Orthonormal Haar system of L²(ν); ``nu`` is a Measure or cell masses."""
    nu = nu if isinstance(nu, Measure) else Measure(lat, nu)
    cm = nu.cube_mass
    nc = lat.n_cubes
    sons = np.arange(1, nc)
    par = lat.parent[sons]
    pos = sons - lat.son_start[par]
    own = sons[pos < lat.son_count[par] - 1]
    cube = lat.parent[own].astype(np.int64)
    A = cm[own]
    # mass of the later siblings, summed over the sibling list
    tail = np.zeros(nc)
    for j in range(int(lat.son_count.max()) - 2, -1, -1):
        sel = own[(own - lat.son_start[lat.parent[own]]) == j]
        tail[sel] = tail[sel + 1] + cm[sel + 1]
    B = tail[own]
    AB = A + B
    a = np.sqrt(B / (A * AB))
    b = np.sqrt(A / (B * AB))
    fun_of_cube = np.full(nc, -1, dtype=np.int64)
    fun_of_cube[own] = np.arange(own.shape[0])
    return HaarSystem(lat, nu, own.astype(np.int64), cube, pos[pos < lat.son_count[par] - 1].astype(np.int64),
                      a, b, fun_of_cube)


@dataclass(frozen=True)
class HaarCoefficients:
    values: np.ndarray  # (f, h_k)_ν
    coarse: float       # <f>_{ν, X}

    def energy(self, total_mass: float) -> float:
        """Σ coefficients² + ||E_0 f||²_ν."""
        return float(np.dot(self.values, self.values) + self.coarse ** 2 * total_mass)


def forward_transform(f, sys: HaarSystem) -> HaarCoefficients:
    lat = sys.lattice
    fnu = np.ascontiguousarray(np.asarray(f, dtype=np.float64) * sys.nu.cell_mass)
    coef, total = kernels.haar_forward(fnu, lat.parent, lat.son_start, lat.son_count,
                                       sys.fun_of_cube, sys.a, sys.b, lat.level_start)
    return HaarCoefficients(coef, total / sys.nu.total)


def inverse_transform(c: HaarCoefficients, sys: HaarSystem) -> np.ndarray:
    lat = sys.lattice
    return kernels.haar_inverse(np.ascontiguousarray(c.values, dtype=np.float64), float(c.coarse),
                                lat.parent, lat.son_start, lat.son_count, sys.fun_of_cube,
                                sys.a, sys.b, lat.level_start)


def expectation(f, k: int, mu: Measure) -> np.ndarray:
    """E_k f: the μ-average of f on each generation-k cube."""
    lat = mu.lattice
    if not 0 <= k <= lat.depth:
        raise InvalidArgument(f"level {k} outside [0, {lat.depth}]")
    avg = mu.average(f)
    ids = np.asarray(lat.level(k))
    return lat.broadcast(avg[ids], k)


def difference(f, k: int, mu: Measure) -> np.ndarray:
    """Δ_k f = E_k f - E_{k-1} f."""
    lat = mu.lattice
    if not 1 <= k <= lat.depth:
        raise InvalidArgument(f"level {k} outside [1, {lat.depth}]")
    return expectation(f, k, mu) - expectation(f, k - 1, mu)


def decompose(q: int, j: int, w: Weight, sys_mu: HaarSystem, sys_w: HaarSystem):
    """Write h_q^j = Σ_k α_k h_q^{w,k} + β χ_q.

    ``sys_w`` is orthonormal in L²(w dμ), so α_k = (h_q^j, h_q^{w,k})_{w dμ}
    and β = (h_q^j, w)_μ / w(q). Returns ``(alpha_row, beta)``; on binary
    lattices the row has one entry.
    """
    lat = sys_mu.lattice
    if lat.is_terminal(q):
        raise InvalidArgument(f"cube {q} is terminal")
    funs = sys_mu.functions_of(q)
    if not 0 <= j < len(funs):
        raise InvalidArgument(f"cube {q} has {len(funs)} Haar functions, index {j} out of range")
    hv = sys_mu.son_values(funs[j])
    s = lat.sons(q)
    wmass = w.mass[s.start:s.stop]
    beta = float(np.dot(hv, wmass) / w.mass[q])
    alpha = np.array([np.dot(hv * sys_w.son_values(k), wmass) for k in sys_w.functions_of(q)])
    return alpha, beta


def oscillation_array(w: Weight) -> np.ndarray:
    return oscillations(w)
