"""Weighted operator norms, bilinear forms, maximal functions, Carleson constants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .haar import forward_transform
from .lattice import Lattice
from .measure import Measure, Weight, dual_weight
from .report import VerificationReport
from .shift import DENSE_LIMIT, ShiftOperator, apply, apply_adjoint, assemble_dense

METHODS = ("auto", "dense-svd", "power-iteration")


@dataclass(frozen=True)
class NormResult:
    value: float
    method: str
    iterations: int
    residual: float
    converged: bool = True


def _check_weight(S: ShiftOperator, w: Weight):
    if w.lattice is not S.lattice:
        raise InvalidArgument("weight and operator live on different lattices")


def weighted_norm(S: ShiftOperator, w: Weight, method: str = "auto", tol: float = 1e-10,
                  max_iter: int | None = None, seed: int = 0) -> NormResult:
    """‖S‖ on L²(w dμ): the top singular value of D^{1/2} A D^{-1/2}, D = w·μ per cell."""
    if method not in METHODS:
        raise InvalidArgument(f"unknown method {method!r}; expected one of {METHODS}")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    _check_weight(S, w)
    ncell = S.lattice.n_cells
    d = w.cell_value * S.mu.cell_mass
    sq = np.sqrt(d)
    if S.n_entries == 0:
        return NormResult(0.0, "dense-svd" if method != "power-iteration" else method, 0, 0.0)
    if method == "dense-svd" or (method == "auto" and ncell <= DENSE_LIMIT):
        A = assemble_dense(S)
        B = sq[:, None] * A / sq[None, :]
        return NormResult(float(np.linalg.norm(B, 2)), "dense-svd", 0, 0.0)

    cm = S.mu.cell_mass
    adj = S.adjoint()
    max_iter = 10 * ncell if max_iter is None else int(max_iter)

    def B(x):
        return sq * apply(S, x / sq)

    def Bt(y):
        # Aᵀ g = μ · S*(g / μ)
        return cm * apply(adj, sq * y / cm) / sq

    x = np.random.default_rng(seed).standard_normal(ncell)
    x /= np.linalg.norm(x)
    sigma, change, it = 0.0, math.inf, 0
    for it in range(1, max_iter + 1):
        y = B(x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return NormResult(0.0, "power-iteration", it, 0.0)
        z = Bt(y / new)
        nz = np.linalg.norm(z)
        x = z / nz
        change = abs(new - sigma) / new
        sigma = new
        if change < tol:
            break
    return NormResult(sigma, "power-iteration", it, change, change < tol)


def bilinear_form(S: ShiftOperator, phi, psi, w: Weight) -> float:
    """(S(φw), ψσ)_μ = Σ c (φw, h_I)_μ (ψσ, h_J)_μ."""
    _check_weight(S, w)
    a = forward_transform(np.asarray(phi) * w.cell_value, S.haar).values
    b = forward_transform(np.asarray(psi) / w.cell_value, S.haar).values
    return float(np.dot(S.coef, a[S.src] * b[S.dst]))


def weighted_l2(f, w: Weight) -> float:
    """‖f‖ in L²(w dμ)."""
    f = np.asarray(f, dtype=np.float64)
    return float(math.sqrt(np.dot(f * f, w.cell_value * w.mu.cell_mass)))


def duality_probe(S: ShiftOperator, w: Weight, pairs: int = 200, seed: int = 0, steps: int = 3):
    """Best normalized |(S φw, ψσ)_μ| / (‖φ‖_w ‖ψ‖_σ) over seeded starts.

    Each random φ is improved by a few alternating best responses:
    ψ ∝ S(φw) and φ ∝ S*(ψσ). Returns ``(best, phi, psi)``.
    """
    _check_weight(S, w)
    sigma = dual_weight(w)
    adj = S.adjoint()
    rng = np.random.default_rng(seed)
    ncell = S.lattice.n_cells
    best, arg = 0.0, (np.zeros(ncell), np.zeros(ncell))
    for _ in range(pairs):
        phi = rng.standard_normal(ncell)
        psi = rng.standard_normal(ncell)
        for k in range(steps + 1):
            den = weighted_l2(phi, w) * weighted_l2(psi, sigma)
            if den > 0:
                val = abs(bilinear_form(S, phi, psi, w)) / den
                if val > best:
                    best, arg = val, (phi.copy(), psi.copy())
            if k == steps:
                break
            psi = apply(S, phi * w.cell_value)
            if not np.any(psi):
                break
            phi = apply_adjoint(S, psi * sigma.cell_value)
            if not np.any(phi):
                break
    return best, arg[0], arg[1]


def maximal_function(f, nu: Measure) -> np.ndarray:
    """Dyadic maximal function: max over cubes Q ∋ x of ⟨|f|⟩_{ν,Q}."""
    lat = nu.lattice
    avg = nu.average(np.abs(np.asarray(f, dtype=np.float64)))
    return kernels.propagate_max(avg, lat.parent, lat.level_start)[lat.leaf_offset:]


def cube_min(F, lat: Lattice) -> np.ndarray:
    """inf over the cells of every cube."""
    F = np.asarray(F, dtype=np.float64)
    out = np.empty(lat.n_cubes)
    for k in range(lat.depth + 1):
        ids = lat.level(k)
        out[ids.start:ids.stop] = np.minimum.reduceat(F, lat.lo[ids.start:ids.stop])
    return out


def carleson_constant(a, lat: Lattice, mu: Measure) -> tuple[float, int]:
    """sup over cubes I of Σ_{J⊆I} a_J / μ(I), and a cube attaining it."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (lat.n_cubes,):
        raise InvalidArgument(f"need one value per cube ({lat.n_cubes}), got shape {a.shape}")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise InvalidArgument("Carleson sequences must be finite and nonnegative")
    ratio = kernels.subtree_sums(np.ascontiguousarray(a), lat.parent, lat.level_start) / mu.cube_mass
    q = int(np.argmax(ratio))
    return float(ratio[q]), q


def carleson_constant_bruteforce(a, lat: Lattice, mu: Measure) -> float:
    """Double loop over pairs J ⊆ I; the test oracle for small lattices."""
    best = 0.0
    for i in range(lat.n_cubes):
        tot = 0.0
        for j in range(lat.n_cubes):
            if lat.lo[i] <= lat.lo[j] and lat.hi[j] <= lat.hi[i] and lat.gen[j] >= lat.gen[i]:
                tot += a[j]
        best = max(best, tot / mu.cube_mass[i])
    return best


def carleson_embedding_check(a, F, sigma: Weight, lat: Lattice, mu: Measure,
                             B: float | None = None) -> VerificationReport:
    """Both embedding inequalities for the sequence ``a`` and positive ``F``.

    The first is asserted with factor 2B. The second has no explicit
    constant, so only its ratio to B ∫ F/σ dμ is recorded (always passes).
    """
    F = np.asarray(F, dtype=np.float64)
    if np.any(F <= 0):
        raise InvalidArgument("F must be strictly positive")
    if B is None:
        B, _ = carleson_constant(a, lat, mu)
    rep = VerificationReport("carleson_embedding", info={"intensity": B})
    infF = cube_min(F, lat)
    lhs1 = float(np.dot(infF, a))
    rep.le("carl1.first", lhs1, 2 * B * mu.integral(F), rtol=1e-12)
    lhs2 = float(np.dot(infF / sigma.averages, a))
    rhs2 = B * mu.integral(F / sigma.cell_value)
    ratio2 = lhs2 / rhs2 if rhs2 > 0 else 0.0
    rep.add("carl1.second_ratio", True, lhs2, rhs2, detail="reported only; the constant is not specified")
    rep.info["second_ratio"] = ratio2
    return rep


@dataclass(frozen=True, eq=False)
class CarlesonSequence:
    """Nonnegative per-cube values together with their Carleson intensity."""

    values: np.ndarray
    intensity: float
    cube: int
    mu: Measure

    @classmethod
    def from_values(cls, values, mu: Measure) -> "CarlesonSequence":
        B, q = carleson_constant(values, mu.lattice, mu)
        return cls(np.asarray(values, dtype=np.float64), B, q, mu)
