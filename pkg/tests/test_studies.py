import numpy as np
import pytest

from pdplast import Collar, FAMILIES, build_grid, build_neighbor_table, make_kernel, tensors
from pdplast.config import from_dict
from pdplast.energy import sphere_shear_density
from pdplast.nonlocal_ops import cell_square_sums
from pdplast.studies import (delta_sweep_study, inverse_power_min, korn_constant_study,
                             pointwise_energy_convergence_study, rigid_probes, verify_suite)

from conftest import rng

SMALL = {"grid": {"cells": [32, 32], "collar": {"kind": "frame", "width": 7}},
         "kernel": {"deltas": [0.2, 0.14, 0.1]}, "steps": 4}


def _cfg(**over):
    d = {k: dict(v) if isinstance(v, dict) else v for k, v in SMALL.items()}
    for k, v in over.items():
        if isinstance(v, dict):
            d.setdefault(k, {}).update(v)
        else:
            d[k] = v
    return from_dict(d)


def test_zero_load_sweep_has_zero_errors():
    rep = delta_sweep_study(_cfg(load={"amplitude": 0.0}))
    assert all(r["e_u"] == 0 and r["e_P"] == 0 and r["e_P_block"] == 0 for r in rep.rows)
    assert rep.passed


def test_elastic_sweep_decreases():
    rep = delta_sweep_study(_cfg(material={"sigma_y": 1e6}))
    assert all(rep.monotone.values()) and rep.passed
    for fam in FAMILIES:
        e = [r["e_u"] for r in rep.rows if r["family"] == fam]
        assert e[0] > e[1] > e[2] > 0
    rates = [r["rate_u"] for r in rep.rows]
    assert np.isnan(rates[0]) and rates[1] > 0


def test_sweep_rows_are_ordered():
    rep = delta_sweep_study(_cfg(kernel={"families": ["constant"]}, steps=2))
    assert [r["delta"] for r in rep.rows] == [0.2, 0.14, 0.1]
    assert set(rep.runtime) == {"local", "constant:0.2", "constant:0.14", "constant:0.1"}


def test_energy_study_zero_fields():
    cfg = _cfg()
    zero = lambda g: (np.zeros((g.n_cells, 2)), np.zeros((g.n_cells, 2)))
    rep = pointwise_energy_convergence_study(cfg, fields_fn=zero)
    for r in rep.rows:
        for key in ("F_delta", "F_0", "err_F", "err_div_term", "err_alpha_term", "moment_norm"):
            assert r[key] == 0
    assert rep.passed


@pytest.mark.parametrize("family", FAMILIES)
def test_affine_alpha_term_against_sphere_average(family):
    """Bounded by the lattice anisotropy of the fourth bond moments."""
    g = build_grid(2, (40, 40), (1, 1), Collar.frame(1))
    t = build_neighbor_table(g, make_kernel(family, 0.2, 2))
    r = rng(4)
    for _ in range(3):
        A = r.standard_normal((2, 2))
        P = np.tile(r.standard_normal(2), (g.n_cells, 1))
        got = cell_square_sums(g.centers @ A.T, P, t)[:, 2] * g.w
        target = sphere_shear_density(np.tile(A, (g.n_cells, 1, 1)), tensors.to_matrix(P, 2), 1.0)
        full = t.full_stencil
        assert np.allclose(got[full], got[full][0], rtol=1e-12)    # translation invariance
        assert abs(got[full][0] - target[0]) <= 0.15 * target[0]


def test_inverse_power_min():
    r = rng(5)
    Q, _ = np.linalg.qr(r.standard_normal((20, 20)))
    lam = np.linspace(1.0, 9.0, 20)
    A = (Q * lam) @ Q.T
    m = np.full(20, 2.0)
    val, v, its = inverse_power_min(A, m, tol=1e-12, max_iter=500)
    assert val == pytest.approx(0.5, rel=1e-6)
    assert np.allclose(A @ v, val * m * v, atol=1e-5 * np.linalg.norm(v))


def test_korn_collar_shrinking():
    cfg = _cfg(kernel={"families": ["constant"], "deltas": [0.2, 0.1]},
               study={"korn_collar_widths": [7, 1]})
    rep = korn_constant_study(cfg)
    assert rep.passed
    lam = {(r["collar"], r["delta"]): r["lambda_min"] for r in rep.rows}
    for d in (0.2, 0.1):
        assert 0 < lam[(1, d)] < lam[(7, d)]
    assert all(r["probe_min_rq"] > 0 for r in rep.rows)


def test_rigid_probes_are_admissible():
    g = build_grid(2, (10, 10), (1, 1), Collar.frame(2))
    probes = rigid_probes(g)
    assert len(probes) == 3
    assert all(np.all(p[g.collar_mask] == 0) and np.any(p) for p in probes)


def test_verify_fault_injection():
    rep = verify_suite(_cfg(study={"kernel_scale": 0.5, "checks": ["kernel_normalization"]}))
    assert not rep.passed
    assert not rep.checks["kernel_normalization"]["passed"]


def test_verify_unknown_check():
    with pytest.raises(ValueError, match="unknown check"):
        verify_suite(_cfg(study={"checks": ["nope"]}))
