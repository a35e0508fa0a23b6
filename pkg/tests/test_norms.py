import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dyadiclab.errors import InvalidArgument
from dyadiclab.haar import build_haar, expectation
from dyadiclab.lattice import build_interval_lattice
from dyadiclab.measure import (Weight, a2_characteristic, cascade_weight, constant_weight, dual_weight, lebesgue,
                               power_weight)
from dyadiclab.norms import (CarlesonSequence, bilinear_form, carleson_constant, carleson_constant_bruteforce,
                             carleson_embedding_check, cube_min, duality_probe, maximal_function, weighted_l2,
                             weighted_norm)
from dyadiclab.shift import build_shift


def coefficient_matrix_norm(S):
    """The L2(mu) norm from the coefficient matrix alone (the Haar basis is orthonormal)."""
    nf = S.haar.n_functions
    K = sp.coo_matrix((S.coef, (S.dst, S.src)), shape=(nf, nf)).toarray()
    return np.linalg.norm(K, 2)


def test_constant_weight_gives_unweighted_norm(interval6):
    lat, mu, H = interval6
    for mn, strat in [((0, 0), "extremal"), ((1, 2), "random-sign"), ((3, 1), "random-uniform")]:
        S = build_shift(lat, mu, H, *mn, strategy=strat, seed=3)
        ref = coefficient_matrix_norm(S)
        for c in (1.0, 7.5):
            r = weighted_norm(S, constant_weight(mu, c))
            assert r.value == pytest.approx(ref, rel=1e-13)


def test_two_cell_closed_form():
    lat = build_interval_lattice(1)
    mu = lebesgue(lat)
    S = build_shift(lat, mu, build_haar(lat, mu), 0, 0)
    w = Weight(mu, np.array([1.0, 3.0]))
    r = weighted_norm(S, w)
    assert r.value == pytest.approx(2 / math.sqrt(3), abs=1e-12)
    assert a2_characteristic(w)[0] == pytest.approx(4 / 3, abs=1e-12)
    assert r.value == pytest.approx(math.sqrt(4 / 3), abs=1e-12)
    p = weighted_norm(S, w, method="power-iteration")
    assert p.value == pytest.approx(2 / math.sqrt(3), rel=1e-9)


@pytest.mark.parametrize("gamma", [0.5, -0.8])
@pytest.mark.parametrize("mn", [(0, 0), (1, 1), (0, 3), (2, 1)])
def test_power_iteration_matches_dense(backend, interval6, gamma, mn):
    lat, mu, H = interval6
    w = power_weight(gamma, lat)
    S = build_shift(lat, mu, H, *mn, strategy="random-sign", seed=1)
    d = weighted_norm(S, w, method="dense-svd")
    p = weighted_norm(S, w, method="power-iteration")
    assert d.method == "dense-svd" and p.method == "power-iteration"
    assert p.converged and p.iterations > 0
    assert p.value == pytest.approx(d.value, rel=1e-8)


def test_power_iteration_on_christ(christ_cloud):
    lat, mu, H = christ_cloud
    w = cascade_weight(0.4, 3, lat, mu)
    S = build_shift(lat, mu, H, 1, 1, "random-uniform", seed=2)
    d = weighted_norm(S, w, method="dense-svd").value
    assert weighted_norm(S, w, method="power-iteration").value == pytest.approx(d, rel=1e-8)


def test_auto_method_switches_on_size():
    lat = build_interval_lattice(13)
    mu = lebesgue(lat)
    S = build_shift(lat, mu, build_haar(lat, mu), 0, 0)
    r = weighted_norm(S, power_weight(0.3, lat))
    assert r.method == "power-iteration" and r.converged


def test_norm_errors(interval6):
    lat, mu, H = interval6
    S = build_shift(lat, mu, H, 0, 0)
    with pytest.raises(InvalidArgument):
        weighted_norm(S, constant_weight(mu), method="lanczos")
    with pytest.raises(InvalidArgument):
        weighted_norm(S, constant_weight(mu), tol=0)
    other = build_interval_lattice(6)
    with pytest.raises(InvalidArgument):
        weighted_norm(S, constant_weight(lebesgue(other)))


def test_bilinear_form_zero_and_dense(interval6):
    lat, mu, H = interval6
    w = power_weight(0.5, lat)
    S = build_shift(lat, mu, H, 1, 2, "random-uniform", seed=0)
    z = np.zeros(lat.n_cells)
    assert bilinear_form(S, z, z, w) == 0
    rng = np.random.default_rng(0)
    phi, psi = rng.normal(size=(2, lat.n_cells))
    from dyadiclab.shift import assemble_dense
    direct = (assemble_dense(S) @ (phi * w.cell_value)) @ (psi / w.cell_value * mu.cell_mass)
    assert bilinear_form(S, phi, psi, w) == pytest.approx(direct, rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), gamma=st.floats(-0.9, 0.9))
def test_duality_bound(seed, gamma):
    lat = build_interval_lattice(5)
    mu = lebesgue(lat)
    S = build_shift(lat, mu, build_haar(lat, mu), 1, 0, "random-sign", seed=seed % 7)
    w = power_weight(gamma, lat)
    sigma = dual_weight(w)
    phi, psi = np.random.default_rng(seed).normal(size=(2, lat.n_cells))
    # (S(phi w), psi sigma) is bounded by the norm of S on L2(sigma dmu)
    bound = weighted_norm(S, sigma).value * weighted_l2(phi, w) * weighted_l2(psi, sigma)
    assert abs(bilinear_form(S, phi, psi, w)) <= bound * (1 + 1e-10)
    assert weighted_norm(S, sigma).value == pytest.approx(weighted_norm(S.adjoint(), w).value, rel=1e-10)


@pytest.mark.parametrize("gamma,mn", [(0.5, (0, 0)), (-0.8, (1, 2)), (0.9, (2, 2))])
def test_duality_probe_reaches_norm(interval6, gamma, mn):
    lat, mu, H = interval6
    w = power_weight(gamma, lat)
    S = build_shift(lat, mu, H, *mn)
    best, phi, psi = duality_probe(S, w, pairs=200, seed=0)
    norm = weighted_norm(S, dual_weight(w)).value
    assert 0.9 * norm <= best <= norm * (1 + 1e-10)
    val = abs(bilinear_form(S, phi, psi, w)) / (weighted_l2(phi, w) * weighted_l2(psi, dual_weight(w)))
    assert val == pytest.approx(best, rel=1e-12)


def test_maximal_function_basics(interval6):
    lat, mu, _ = interval6
    assert np.allclose(maximal_function(np.ones(lat.n_cells), mu), 1.0)
    f = np.random.default_rng(1).normal(size=lat.n_cells)
    M = maximal_function(f, mu)
    for k in range(lat.depth + 1):
        assert np.all(M >= np.abs(expectation(np.abs(f), k, mu)) - 1e-15)
        assert np.all(M >= np.abs(expectation(f, k, mu)) - 1e-15)


@pytest.mark.parametrize("N", [1, 2, 4, 7])
def test_maximal_lq_bound(N):
    lat = build_interval_lattice(9)
    mu = lebesgue(lat)
    nu = mu.weighted(cascade_weight(0.5, N, lat))
    p = 2 - 1 / N
    q = 2 / p
    for seed in range(5):
        rng = np.random.default_rng(seed)
        f = rng.standard_cauchy(lat.n_cells) * (rng.random(lat.n_cells) < 0.05)
        M = maximal_function(f, nu)
        lhs = ((np.abs(M) ** q) @ nu.cell_mass) ** (1 / q)
        rhs = q / (q - 1) * ((np.abs(f) ** q) @ nu.cell_mass) ** (1 / q)
        assert lhs <= rhs * (1 + 1e-12)


def test_cube_min(interval6):
    lat, _, _ = interval6
    F = np.random.default_rng(0).normal(size=lat.n_cells)
    m = cube_min(F, lat)
    for q in (0, 1, 10, lat.n_cubes - 1):
        assert m[q] == F[lat.lo[q]:lat.hi[q]].min()


def test_carleson_examples():
    D = 7
    lat = build_interval_lattice(D)
    mu = lebesgue(lat)
    B, q = carleson_constant(mu.cube_mass.copy(), lat, mu)
    assert B == pytest.approx(D + 1, rel=1e-13) and q == 0
    a = np.zeros(lat.n_cubes)
    a[12] = mu.cube_mass[12]
    assert carleson_constant(a, lat, mu)[0] == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    a = rng.exponential(size=lat.n_cubes) * mu.cube_mass
    B = carleson_constant(a, lat, mu)[0]
    assert carleson_constant(3.5 * a, lat, mu)[0] == pytest.approx(3.5 * B, rel=1e-13)
    assert B == pytest.approx(carleson_constant_bruteforce(a, lat, mu), rel=1e-12)
    seq = CarlesonSequence.from_values(a, mu)
    assert seq.intensity == B
    with pytest.raises(InvalidArgument):
        carleson_constant(-a, lat, mu)
    with pytest.raises(InvalidArgument):
        carleson_constant(a[:-1], lat, mu)


def test_carleson_on_christ_matches_bruteforce(christ_cloud):
    lat, mu, _ = christ_cloud
    a = np.random.default_rng(0).exponential(size=lat.n_cubes)
    assert carleson_constant(a, lat, mu)[0] == pytest.approx(carleson_constant_bruteforce(a, lat, mu), rel=1e-12)


def test_embedding_leaf_example():
    lat = build_interval_lattice(6)
    mu = lebesgue(lat)
    a = np.zeros(lat.n_cubes)
    a[lat.leaf_offset:] = mu.cube_mass[lat.leaf_offset:]
    rep = carleson_embedding_check(a, np.ones(lat.n_cells), constant_weight(mu), lat, mu)
    first = rep.worst("carl1.first")
    assert first.lhs == pytest.approx(1.0) and first.rhs == pytest.approx(2.0) and rep.passed


def test_embedding_random_never_violated():
    lat = build_interval_lattice(10)
    mu = lebesgue(lat)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        a = rng.exponential(size=lat.n_cubes) * mu.cube_mass * (rng.random(lat.n_cubes) < 0.3)
        F = rng.lognormal(sigma=1.5, size=lat.n_cells)
        sigma = dual_weight(cascade_weight(0.5, seed, lat))
        rep = carleson_embedding_check(a, F, sigma, lat, mu)
        assert rep.worst("carl1.first").passed


def test_embedding_second_with_unit_sigma_matches_first():
    lat = build_interval_lattice(8)
    mu = lebesgue(lat)
    rng = np.random.default_rng(1)
    a = rng.exponential(size=lat.n_cubes) * mu.cube_mass
    F = rng.lognormal(size=lat.n_cells)
    rep = carleson_embedding_check(a, F, constant_weight(mu), lat, mu)
    first = rep.worst("carl1.first")
    second = rep.worst("carl1.second_ratio")
    # with sigma = 1 the second form is the first one without the factor 2
    assert second.lhs == pytest.approx(first.lhs, rel=1e-12)
    assert second.rhs == pytest.approx(first.rhs / 2, rel=1e-12)
    with pytest.raises(InvalidArgument):
        carleson_embedding_check(a, -F, constant_weight(mu), lat, mu)
