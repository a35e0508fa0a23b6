import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dyadiclab.errors import InvalidArgument, NotIntegrable
from dyadiclab.lattice import build_interval_lattice
from dyadiclab.measure import (Measure, Weight, a2_characteristic, cascade_weight, constant_weight,
                               doubling_constant, dual_weight, lebesgue, oscillation, oscillations, power_weight)


def a2_bruteforce(w: Weight) -> float:
    """Loop over cubes, averaging the cells of each one directly."""
    lat, cm = w.lattice, w.mu.cell_mass
    best = 0.0
    for q in range(lat.n_cubes):
        sl = slice(lat.lo[q], lat.hi[q])
        m = cm[sl].sum()
        best = max(best, (w.cell_value[sl] @ cm[sl] / m) * ((1 / w.cell_value[sl]) @ cm[sl] / m))
    return best


def two_cell(values, masses=(0.5, 0.5)):
    lat = build_interval_lattice(1)
    return Weight(Measure(lat, np.array(masses)), np.array(values, dtype=float))


def test_dual_weight():
    lat = build_interval_lattice(3)
    one = constant_weight(lebesgue(lat))
    assert np.array_equal(dual_weight(one).cell_value, one.cell_value)
    w = two_cell([1.0, 3.0])
    assert np.allclose(dual_weight(w).cell_value, [1.0, 1 / 3])
    v = power_weight(0.7, build_interval_lattice(6))
    assert np.array_equal(dual_weight(dual_weight(v)).cell_value, v.cell_value)


def test_a2_constant_weight():
    lat = build_interval_lattice(5)
    w = constant_weight(lebesgue(lat), 3.0)
    Q, _ = a2_characteristic(w)
    assert Q == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(w.averages * dual_weight(w).averages, 1.0)


def test_a2_two_cells():
    Q, q = a2_characteristic(two_cell([1.0, 3.0]))
    assert Q == pytest.approx(4 / 3, rel=1e-15) and q == 0


def test_a2_power_matches_bruteforce_and_grows_with_depth():
    vals = []
    for depth in (8, 10, 12):
        w = power_weight(0.9, build_interval_lattice(depth))
        Q, _ = a2_characteristic(w)
        if depth == 12:
            assert Q == pytest.approx(a2_bruteforce(w), rel=1e-12)
        vals.append(Q)
    assert vals[0] < vals[1] < vals[2]


def test_a2_increases_with_abs_gamma():
    lat = build_interval_lattice(9)
    for sign in (1, -1):
        Qs = [a2_characteristic(power_weight(sign * g, lat))[0] for g in (0.0, 0.3, 0.5, 0.8, 0.9)]
        assert np.all(np.diff(Qs) > 0)
        assert Qs[2] == pytest.approx(a2_bruteforce(power_weight(sign * 0.5, lat)), rel=1e-12)


def test_oscillation_examples():
    lat = build_interval_lattice(4)
    assert np.all(oscillations(constant_weight(lebesgue(lat))) == 0)
    w = two_cell([1.0, 3.0])
    assert w.averages[0] == 2.0 and oscillation(w, 0) == 2.0
    with pytest.raises(InvalidArgument):
        oscillation(w, 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.0, 50.0))
def test_oscillation_shift_invariant(seed, c):
    lat = build_interval_lattice(5)
    mu = lebesgue(lat)
    v = np.random.default_rng(seed).uniform(0.1, 5.0, lat.n_cells)
    a, b = Weight(mu, v), Weight(mu, v + c)
    assert np.allclose(oscillations(a), oscillations(b), atol=1e-10 * (1 + c))


def test_power_weight_cell_average():
    lat = build_interval_lattice(1)
    w = power_weight(0.5, lat)
    assert w.cell_value[0] == pytest.approx((2 / 3) * 0.5 ** 0.5, rel=1e-14)
    assert np.array_equal(power_weight(0.0, build_interval_lattice(6)).cell_value, np.ones(64))


@pytest.mark.parametrize("gamma,x0", [(0.5, 0.0), (-0.9, 0.0), (0.3, 0.37), (-0.6, 0.5)])
def test_power_weight_against_quadrature(gamma, x0):
    lat = build_interval_lattice(5)
    w = power_weight(gamma, lat, x0)
    n = lat.n_cells
    for i in (0, 1, 7, 16, 31):
        a, b = i / n, (i + 1) / n
        pts = [x0] if a < x0 < b else None
        val, _ = integrate.quad(lambda x: abs(x - x0) ** gamma, a, b, points=pts, epsabs=0, epsrel=1e-12, limit=200)
        assert w.cell_value[i] == pytest.approx(val * n, rel=1e-9)


def test_power_weight_rejects_non_a2():
    with pytest.raises(NotIntegrable):
        power_weight(1.0, build_interval_lattice(3))
    with pytest.raises(NotIntegrable):
        power_weight(-1.2, build_interval_lattice(3))


def test_cascade():
    lat = build_interval_lattice(8)
    assert np.allclose(cascade_weight(0.0, 4, lat).cell_value, 1.0)
    assert np.array_equal(cascade_weight(0.3, 4, lat).cell_value, cascade_weight(0.3, 4, lat).cell_value)
    Qs = [a2_characteristic(cascade_weight(e, 4, lat))[0] for e in (0.0, 0.1, 0.3, 0.5, 0.7)]
    assert np.all(np.diff(Qs) > 0)
    w = cascade_weight(0.4, 1, lat)
    assert a2_characteristic(w)[0] == pytest.approx(a2_bruteforce(w), rel=1e-12)


def test_cascade_on_christ_keeps_parent_average(christ_cloud):
    lat, mu, _ = christ_cloud
    w = cascade_weight(0.3, 2, lat, mu)
    for q in range(lat.leaf_offset):
        s = lat.sons(q)
        assert w.mass[s.start:s.stop].sum() == pytest.approx(w.mass[q], rel=1e-12)


def test_doubling_constant():
    lat = build_interval_lattice(6)
    assert doubling_constant(lebesgue(lat)) == (2.0, 0.5)
    r, c1 = doubling_constant(Measure(build_interval_lattice(1), np.array([0.25, 0.75])))
    assert r == pytest.approx(4.0) and c1 == pytest.approx(0.25)


@pytest.mark.parametrize("make", [lambda lat: power_weight(-0.7, lat), lambda lat: cascade_weight(0.4, 3, lat)])
def test_doubling_ratio_monotone_under_refinement(make):
    # the depth-d lattice is the top of the depth-(d+1) one, so the ratio is a
    # max over more parent/son pairs; equal up to rounding of the cube sums
    ratios = []
    for depth in range(2, 10):
        lat = build_interval_lattice(depth)
        ratios.append(doubling_constant(lebesgue(lat).weighted(make(lat)))[0])
    assert np.all(np.diff(ratios) >= -1e-13 * np.array(ratios[1:]))


def test_weight_validation():
    lat = build_interval_lattice(2)
    with pytest.raises(InvalidArgument):
        Weight(lebesgue(lat), np.array([1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(InvalidArgument):
        Weight(lebesgue(lat), np.ones(3))
