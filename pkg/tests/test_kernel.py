import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, strategies as st

from pdplast import Collar, FAMILIES, build_grid, build_neighbor_table, make_kernel
from pdplast.kernel import kernel_tail_mass, sphere_area


@pytest.mark.parametrize("family, delta, c", [("constant", 0.5, 8 / math.pi),
                                              ("quadratic", 1.0, 4 / math.pi),
                                              ("inverse", 0.5, 2 / math.pi)])
def test_normalization_constants(family, delta, c):
    assert make_kernel(family, delta, 2).c == pytest.approx(c, rel=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [2, 3])
def test_total_mass_is_dimension(family, n):
    k = make_kernel(family, 0.7, n)
    m, _ = scipy.integrate.quad(lambda r: float(k.profile(r)) * r ** (n - 1), 0, k.delta,
                                epsrel=1e-13)
    assert sphere_area(n) * m == pytest.approx(n, rel=1e-12)


def test_tail_mass_examples():
    assert kernel_tail_mass(make_kernel("constant", 0.5, 2), 0.5) == 0.0
    assert kernel_tail_mass(make_kernel("constant", 1.0, 2), 0.5) == pytest.approx(1.5)
    assert kernel_tail_mass(make_kernel("quadratic", 1.0, 2), 1e-9) == pytest.approx(2.0)


@pytest.mark.parametrize("family", FAMILIES)
@given(r=st.floats(0.01, 0.99))
def test_scaled_profile_is_nonincreasing(family, r):
    k = make_kernel(family, 1.0, 2)
    a, b = k.scaled_profile(r), k.scaled_profile(min(r * 1.01, 0.999))
    assert b <= a * (1 + 1e-12)


def test_bad_kernel_arguments():
    with pytest.raises(ValueError):
        make_kernel("gaussian", 0.1, 2)
    with pytest.raises(ValueError):
        make_kernel("constant", 0.0, 2)
    with pytest.raises(ValueError):
        make_kernel("constant", 0.1, 4)


def test_stencil_mass_and_truncation():
    g = build_grid(2, (8, 8), (1, 1), Collar.frame(1))
    t = build_neighbor_table(g, make_kernel("constant", 0.3, 2), "stencil")
    full = t.full_stencil
    assert full.any()
    assert np.allclose(t.mass[full], 2.0, rtol=1e-14)
    counts = t.valid.sum(axis=0)
    assert np.all(counts[full] == t.n_offsets)
    corner = 0
    assert t.mass[corner] < t.mass[full][0]


def test_too_small_horizon():
    g = build_grid(2, (8, 8), (1, 1), Collar.frame(1))
    with pytest.raises(ValueError):
        build_neighbor_table(g, make_kernel("constant", 1 / 16, 2))


def test_pairs_match_neighbors():
    g = build_grid(2, (6, 7), (1, 1.2), Collar.frame(1))
    t = build_neighbor_table(g, make_kernel("inverse", 0.4, 2))
    i, j, s = t.pairs()
    for cell in (0, 17, 41):
        jj, rho, e, d = t.neighbors(cell)
        assert np.array_equal(np.sort(j[i == cell]), np.sort(jj))
        dx = g.centers[jj] - g.centers[cell]
        assert np.allclose(np.linalg.norm(dx, axis=1), d)
        assert np.allclose(dx / d[:, None], e)
        assert np.all(d < 0.4) and np.all(rho > 0)
