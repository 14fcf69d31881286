import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdplast import (Collar, LoadProgram, MaterialParams, State, apply_constraint, bilinear_B,
                     build_grid, build_neighbor_table, dissipation_H, energy_F, energy_terms,
                     lame_convert, local_energy_F0, make_kernel, quadratic_energy, seminorms, tensors)
from pdplast.energy import local_quadratic, sphere_moment4, work
from pdplast.nonlocal_ops import cell_square_sums

from conftest import rng


def test_lame_examples():
    assert lame_convert(2, 1, 2) == pytest.approx((1.0, 1.0))
    assert lame_convert(5, 2, 3) == pytest.approx((8 / 3, 2.0))
    lam, mu = lame_convert(5, 0.1, 3)
    assert lam < 0 and 3 * lam + 2 * mu == pytest.approx(0.6)
    with pytest.raises(ValueError):
        lame_convert(0, 1, 2)


@pytest.mark.parametrize("bad", [dict(gamma=0), dict(sigma_y=-1), dict(alpha=float("nan")), dict(n=1)])
def test_material_validation(bad):
    kw = dict(alpha=1, beta=1, gamma=1, sigma_y=1)
    kw.update(bad)
    with pytest.raises(ValueError):
        MaterialParams(**kw)


def _state(table, seed, admissible=True):
    g = table.grid
    r = rng(seed)
    u = r.standard_normal((g.n_cells, 2))
    if admissible:
        u = apply_constraint(g, u)
    return State(u, r.standard_normal((g.n_cells, 2)))


def test_zero_and_rigid(table16, params):
    g = table16.grid
    z = State.zeros(g)
    assert quadratic_energy(z, table16, params) == 0.0
    assert bilinear_B(z, _state(table16, 1), table16, params) == 0.0
    S = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rigid = State(g.centers @ S.T + 1.0, np.zeros((g.n_cells, 2)))
    assert abs(quadratic_energy(rigid, table16, params)) < 1e-24


@given(seed=st.integers(0, 10 ** 6))
def test_polarization(table16, params, seed):
    x, y = _state(table16, seed), _state(table16, seed + 1)
    lhs = bilinear_B(x, y, table16, params)
    rhs = (quadratic_energy(x + y, table16, params) - quadratic_energy(x - y, table16, params)) / 4
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)
    assert bilinear_B(x, x, table16, params) == pytest.approx(quadratic_energy(x, table16, params),
                                                               rel=1e-12)


def test_alpha_term_from_pair_sums(table16, params):
    g = table16.grid
    P = np.tile([1 / math.sqrt(2), 0.0], (g.n_cells, 1))     # |P|_F = 1
    st_ = State(np.zeros((g.n_cells, 2)), P)
    terms = energy_terms(st_, table16, params)
    assert terms["gamma"] == pytest.approx(params.gamma, rel=1e-12)
    assert terms["beta"] == 0.0
    sums = cell_square_sums(st_.u, P, table16)
    assert terms["alpha"] == pytest.approx(params.alpha * g.w ** 2 * sums[:, 2].sum(), rel=1e-12)
    assert terms["alpha"] >= 0
    F = energy_F(st_, 0.0, table16, params, LoadProgram.zero(g))
    assert F == pytest.approx(terms["alpha"] + params.gamma, rel=1e-12)


def test_energy_rejects_inadmissible(table16, params):
    with pytest.raises(ValueError, match="collar"):
        energy_F(_state(table16, 3, admissible=False), 0.0, table16, params, LoadProgram.zero(table16.grid))


def test_work_and_load(table16):
    g = table16.grid
    load = LoadProgram.from_profile(g, "constant", 2.0, times=[0, 1, 3], values=[0, 1, 0.5],
                                    direction=[0.0, 1.0])
    assert np.allclose(load(0.5), [0.0, 1.0])
    assert np.allclose(load(2.0), [0.0, 1.5])
    u = np.ones((g.n_cells, 2))
    assert work(u, load(1.0), g.w) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        load(3.5)
    with pytest.raises(ValueError):
        LoadProgram(np.array([0.0, 0.0]), np.zeros((2, g.n_cells, 2)))
    rot = LoadProgram.from_profile(g, "rotating_ramp", 1.0)
    assert np.allclose(rot(1.0), [0.0, 1.0], atol=1e-15)


def test_dissipation_examples():
    g = build_grid(2, (4, 4), (2, 2), Collar.frame(1))
    p = MaterialParams(1, 1, 1, 0.5)
    P0 = np.zeros((16, 2))
    P1 = P0.copy()
    P1[5] = [1.0, 0.0]
    assert dissipation_H(P1, P0, g, p) == pytest.approx(0.5 * math.sqrt(2) * 0.25)
    assert dissipation_H(P0, P0, g, p) == 0.0
    r = rng(9)
    A, B, C = (r.standard_normal((16, 2)) for _ in range(3))
    assert dissipation_H(C, A, g, p) <= dissipation_H(C, B, g, p) + dissipation_H(B, A, g, p) + 1e-14


def test_local_energy_affine_field():
    g = build_grid(2, (10, 10), (1, 1), Collar.frame(1))
    p = MaterialParams(2.0, 1.0, 1.0, 1.0)
    lam, mu = p.lam, p.mu
    u = g.centers.copy()      # A = I everywhere (FD exact for affine fields)
    st_ = State(u, np.zeros((g.n_cells, 2)))
    assert local_quadratic(st_, g, p) == pytest.approx(0.5 * lam * 4 + mu * 2, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_local_forms_agree(n):
    g = build_grid(n, (8,) * n, (1.0,) * n, Collar.frame(1))
    p = MaterialParams(1.3, 0.7, 0.4, 1.0, n=n)
    r = rng(11)
    st_ = State(apply_constraint(g, r.standard_normal((g.n_cells, n))),
                r.standard_normal((g.n_cells, tensors.dev_dim(n))))
    load = LoadProgram.zero(g)
    a = local_energy_F0(st_, 0.0, g, p, load, "lame")
    b = local_energy_F0(st_, 0.0, g, p, load, "sphere")
    assert a == pytest.approx(b, rel=1e-10)


def test_coercivity_report(table16, params):
    """F / |(u,P)|_T^2 stays bounded below on random admissible states."""
    ratios = []
    for seed in range(10):
        s = _state(table16, seed)
        rep = seminorms(s, table16)
        ratios.append(quadratic_energy(s, table16, params) / rep.t_norm ** 2)
    assert min(ratios) > 0


@pytest.mark.parametrize("n", [2, 3])
def test_sphere_moment4_against_monte_carlo(n):
    z = rng(7).standard_normal((10 ** 6, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    mc = np.einsum("si,sj,sk,sl->ijkl", z, z, z, z, optimize=True) / z.shape[0]
    np.testing.assert_allclose(mc, sphere_moment4(n), atol=2e-3)


@given(st.integers(0, 10 ** 6), st.integers(2, 6))
def test_knot_sum_dissipation_subpartition(seed, m):
    """Dropping knots never increases the sum; along a ray it is unchanged."""
    g = build_grid(2, (4, 4), (1.0, 1.0), Collar.frame(1))
    p = MaterialParams(1.0, 1.0, 1.0, 0.3)
    r = rng(seed)
    path = np.cumsum(r.standard_normal((m + 1, g.n_cells, 2)), axis=0)
    full = sum(dissipation_H(path[i], path[i - 1], g, p) for i in range(1, m + 1))
    sub = path[::2] if m % 2 == 0 else np.concatenate([path[::2], path[-1:]])
    coarse = sum(dissipation_H(sub[i], sub[i - 1], g, p) for i in range(1, len(sub)))
    assert coarse <= full * (1 + 1e-12)
    ray = np.linspace(0, 1, m + 1)[:, None, None] * r.standard_normal((g.n_cells, 2))
    ray_full = sum(dissipation_H(ray[i], ray[i - 1], g, p) for i in range(1, m + 1))
    assert ray_full == pytest.approx(dissipation_H(ray[-1], ray[0], g, p), rel=1e-12)
