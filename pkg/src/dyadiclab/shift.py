"""Dyadic shifts of complexity (m, n).

An operator is a flat list of entries ``(L, i, j, c)``: ``i`` is a Haar
function (of the μ-system) living on a cube I with g(I) = g(L) + m, ``j``
one living on J with g(J) = g(L) + n, both inside L, and

    S f = Σ c (f, h_i)_μ h_j.

Applying S costs one forward transform, one gather/scatter over the
entries and one inverse transform.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import InvalidArgument, ResourceLimit
from .haar import HaarCoefficients, HaarSystem, forward_transform, inverse_transform
from .lattice import Lattice
from .measure import Measure

STRATEGIES = ("extremal", "random-sign", "random-uniform", "sparse")
DENSE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    m: int
    n: int
    strategy: str
    seed: int
    haar: HaarSystem
    L: np.ndarray
    src: np.ndarray    # Haar function index on I
    dst: np.ndarray    # Haar function index on J
    coef: np.ndarray

    @property
    def lattice(self) -> Lattice:
        return self.haar.lattice

    @property
    def mu(self) -> Measure:
        return self.haar.nu

    @property
    def n_entries(self) -> int:
        return self.coef.shape[0]

    @property
    def I(self) -> np.ndarray:
        return self.haar.cube[self.src]

    @property
    def J(self) -> np.ndarray:
        return self.haar.cube[self.dst]

    def bound(self) -> np.ndarray:
        """√μ(I)√μ(J)/μ(L) for every entry."""
        cm = self.mu.cube_mass
        return np.sqrt(cm[self.I] * cm[self.J]) / cm[self.L]

    def admissible(self, rtol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.coef) <= self.bound() * (1 + rtol)))

    def mix(self, x: np.ndarray) -> np.ndarray:
        """Coefficient-space action: y_j = Σ c x_i."""
        return kernels.shift_mix(np.ascontiguousarray(x, dtype=np.float64), self.src, self.dst,
                                 self.coef, self.haar.n_functions)

    def adjoint(self) -> "ShiftOperator":
        """The L²(μ) adjoint: (m, n) swapped and every entry transposed."""
        return replace(self, m=self.n, n=self.m, src=self.dst, dst=self.src)

    def with_coefficients(self, coef) -> "ShiftOperator":
        coef = np.asarray(coef, dtype=np.float64)
        if coef.shape != self.coef.shape:
            raise InvalidArgument("coefficient array has the wrong length")
        return replace(self, coef=coef)

    def to_dict(self) -> dict:
        return {
            "m": self.m, "n": self.n, "strategy": self.strategy, "seed": self.seed,
            "entries": [
                {"L": int(l), "I": int(i), "i": int(si), "J": int(j), "j": int(sj), "c": float(c)}
                for l, i, si, j, sj, c in zip(self.L, self.I, self.src, self.J, self.dst, self.coef)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _ancestor(lat: Lattice, q: np.ndarray, k: int) -> np.ndarray:
    a = q.copy()
    for _ in range(k):
        a = lat.parent[a]
    return a


def _functions_by_ancestor(sys: HaarSystem, k: int):
    """For every cube L: the Haar functions whose cube lies k generations below L.

    Returns ``(order, start, count)``: the functions of L are
    ``order[start[L]:start[L]+count[L]]``.
    """
    lat = sys.lattice
    nc = lat.n_cubes
    cube = sys.cube
    ok = lat.gen[cube] >= k
    funs = np.flatnonzero(ok)
    anc = _ancestor(lat, cube[funs], k)
    order = funs[np.argsort(anc, kind="stable")]
    count = np.bincount(anc, minlength=nc).astype(np.int64)
    start = np.concatenate([[0], np.cumsum(count)[:-1]]).astype(np.int64)
    return order, start, count


def build_shift(lat: Lattice, mu: Measure, haar_mu: HaarSystem, m: int, n: int,
                strategy: str = "extremal", seed: int = 0) -> ShiftOperator:
    if haar_mu.lattice is not lat:
        raise InvalidArgument("Haar system was built on a different lattice")
    if not np.array_equal(haar_mu.nu.cell_mass, mu.cell_mass):
        raise InvalidArgument("Haar system must be adapted to mu")
    if strategy not in STRATEGIES:
        raise InvalidArgument(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    m, n = int(m), int(n)
    if m < 0 or n < 0:
        raise InvalidArgument("m and n must be nonnegative")
    if max(m, n) > lat.depth:
        raise InvalidArgument(f"complexity ({m},{n}) exceeds depth {lat.depth}")

    oi, si, ci = _functions_by_ancestor(haar_mu, m)
    oj, sj, cj = _functions_by_ancestor(haar_mu, n)
    Ls = np.flatnonzero((ci > 0) & (cj > 0))
    tot = ci[Ls] * cj[Ls]
    nent = int(tot.sum())
    Lrep = np.repeat(Ls, tot)
    first = np.cumsum(tot) - tot
    local = np.arange(nent, dtype=np.int64) - np.repeat(first, tot)
    src = oi[si[Lrep] + local // cj[Lrep]]
    dst = oj[sj[Lrep] + local % cj[Lrep]]

    cm = mu.cube_mass
    bound = np.sqrt(cm[haar_mu.cube[src]] * cm[haar_mu.cube[dst]]) / cm[Lrep]
    rng = np.random.default_rng(seed)
    if strategy == "extremal":
        coef = bound
    elif strategy == "random-sign":
        coef = bound * rng.choice([-1.0, 1.0], size=nent)
    elif strategy == "random-uniform":
        coef = bound * rng.uniform(-1.0, 1.0, size=nent)
    else:
        pick = first + (rng.random(Ls.shape[0]) * tot).astype(np.int64)
        Lrep, src, dst, coef = Lrep[pick], src[pick], dst[pick], bound[pick]
    return ShiftOperator(m, n, strategy, int(seed), haar_mu, Lrep.astype(np.int64),
                         src.astype(np.int64), dst.astype(np.int64), np.ascontiguousarray(coef))


def apply(S: ShiftOperator, f) -> np.ndarray:
    c = forward_transform(f, S.haar)
    return inverse_transform(HaarCoefficients(S.mix(c.values), 0.0), S.haar)


def apply_adjoint(S: ShiftOperator, g) -> np.ndarray:
    """L²(μ) adjoint of S applied to ``g``."""
    return apply(S.adjoint(), g)


def apply_transpose(S: ShiftOperator, g) -> np.ndarray:
    """Plain matrix transpose: Aᵀ g = μ · S*(g / μ)."""
    cm = S.mu.cell_mass
    return cm * apply_adjoint(S, np.asarray(g) / cm)


def haar_sparse(sys: HaarSystem) -> sp.csr_matrix:
    """All Haar functions as rows of a sparse (functions × cells) matrix."""
    lat = sys.lattice
    rows, cols, vals = [], [], []
    for k in range(sys.n_functions):
        q, s = int(sys.cube[k]), int(sys.owner[k])
        a0, a1, b1 = lat.lo[s], lat.hi[s], lat.hi[q]
        rows.append(np.full(b1 - a0, k))
        cols.append(np.arange(a0, b1))
        vals.append(np.concatenate([np.full(a1 - a0, sys.a[k]), np.full(b1 - a1, -sys.b[k])]))
    if not rows:
        return sp.csr_matrix((0, lat.n_cells))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(sys.n_functions, lat.n_cells))


def assemble_dense(S: ShiftOperator) -> np.ndarray:
    """Dense matrix A with A f = apply(S, f), built from the kernel formula."""
    ncell = S.lattice.n_cells
    if ncell > DENSE_LIMIT:
        raise ResourceLimit(f"{ncell} cells exceeds the dense limit of {DENSE_LIMIT}")
    H = haar_sparse(S.haar)
    nf = S.haar.n_functions
    K = sp.csr_matrix((S.coef, (S.dst, S.src)), shape=(nf, nf))
    A = (H.T @ K @ H).toarray()
    return A * S.mu.cell_mass[None, :]
