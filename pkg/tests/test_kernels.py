import numpy as np
import pytest

from dyadiclab import _fallback, kernels
from dyadiclab.haar import build_haar
from dyadiclab.lattice import MetricSpace, build_christ_lattice, build_interval_lattice
from dyadiclab.measure import counting, lebesgue

compiled = pytest.importorskip("dyadiclab._kernels")


def _cases():
    lat = build_interval_lattice(7)
    yield lat, build_haar(lat, lebesgue(lat))
    rng = np.random.default_rng(1)
    lat = build_christ_lattice(MetricSpace.from_points(rng.normal(size=(90, 3))), 0.5, 4, seed=2)
    yield lat, build_haar(lat, counting(lat))


@pytest.mark.parametrize("case", range(2))
def test_backends_agree(case):
    lat, H = list(_cases())[case]
    rng = np.random.default_rng(case)
    fnu = rng.normal(size=lat.n_cells)
    args = (lat.parent, lat.son_start, lat.son_count, H.fun_of_cube, H.a, H.b, lat.level_start)
    c1, t1 = compiled.haar_forward(fnu, *args)
    c2, t2 = _fallback.haar_forward(fnu, *args)
    assert np.allclose(c1, c2, atol=1e-13) and t1 == pytest.approx(t2)
    x1 = compiled.haar_inverse(c1, 0.3, *args)
    x2 = _fallback.haar_inverse(c1, 0.3, *args)
    assert np.allclose(x1, x2, atol=1e-13)

    v = rng.uniform(size=lat.n_cubes)
    assert np.allclose(compiled.subtree_sums(v, lat.parent, lat.level_start),
                       _fallback.subtree_sums(v, lat.parent, lat.level_start))
    assert np.array_equal(compiled.propagate_max(v, lat.parent, lat.level_start),
                          _fallback.propagate_max(v, lat.parent, lat.level_start))

    nf = H.n_functions
    src = rng.integers(0, nf, 300).astype(np.int64)
    dst = rng.integers(0, nf, 300).astype(np.int64)
    coef = rng.normal(size=300)
    x = rng.normal(size=nf)
    assert np.allclose(compiled.shift_mix(x, src, dst, coef, nf), _fallback.shift_mix(x, src, dst, coef, nf))


def test_set_backend_switches_and_rejects_unknown():
    prev = kernels.BACKEND
    try:
        kernels.set_backend("python")
        assert kernels.haar_forward is _fallback.haar_forward
        kernels.set_backend("compiled")
        assert kernels.haar_forward is compiled.haar_forward
    finally:
        kernels.set_backend(prev)
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_environment_variable_forces_fallback():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-c", "from dyadiclab import kernels; print(kernels.BACKEND)"],
                         env={"DYADICLAB_BACKEND": "python", "PATH": ""}, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
