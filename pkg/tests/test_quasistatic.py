import numpy as np
import pytest

from pdplast import (Collar, LoadProgram, MaterialParams, SolverConfig, State, build_grid,
                     build_neighbor_table, energy_ledger, make_kernel, run_quasistatic,
                     stability_spot_check)
from pdplast.quasistatic import march
from pdplast.solver import get_model


@pytest.fixture(scope="module")
def setup():
    g = build_grid(2, (16, 16), (1.0, 1.0), Collar.frame(3))
    t = build_neighbor_table(g, make_kernel("quadratic", 0.18, 2))
    p = MaterialParams(1.0, 10.0, 1.0, 0.05)
    load = LoadProgram.from_profile(g, "shear_ramp", 6.0)
    return g, t, p, load


def _P0(g):
    return np.zeros((g.n_cells, 2))


def test_zero_load_trajectory(setup):
    g, t, p, _ = setup
    z = LoadProgram.zero(g)
    tr = run_quasistatic(_P0(g), z, 4, t, p)
    assert tr.complete and not tr.flagged
    assert all(np.all(s.u == 0) and np.all(s.P == 0) for s in tr.states)
    led = energy_ledger(tr, z, t, p)
    for arr in (led.F, led.H, led.Diss, led.work, led.upper_gap, led.balance_residual):
        assert np.all(arr == 0)


def test_elastic_ramp_scales_linearly(setup):
    g, t, p, load = setup
    pe = p.with_(sigma_y=1e6)
    N = 5
    tr = run_quasistatic(_P0(g), load, N, t, pe)
    uN = tr.states[-1].u
    for i, s in enumerate(tr.states):
        assert np.all(s.P == 0)
        assert np.allclose(s.u, i / N * uN, rtol=1e-9, atol=1e-12 * np.abs(uN).max())
    led = energy_ledger(tr, load, t, pe)
    assert np.all(led.H == 0)
    assert np.all(led.upper_gap[1:] > 0)


def test_plastic_ramp_dissipates_and_refines(setup):
    g, t, p, load = setup
    tr = run_quasistatic(_P0(g), load, 8, t, p)
    led = energy_ledger(tr, load, t, p)
    assert led.Diss[-1] > 0 and np.any(tr.states[-1].P != 0)
    assert np.all(led.upper_gap >= -1e-12 * led.scale)
    tr2 = run_quasistatic(_P0(g), load, 16, t, p)
    led2 = energy_ledger(tr2, load, t, p)
    assert led2.balance_residual[-1] < led.balance_residual[-1]
    rows = list(led.rows())
    assert len(rows) == 9 and set(rows[0]) == {"step", "t", "F", "H_step", "Diss", "work",
                                               "upper_gap", "balance_residual"}


def test_cold_and_warm_starts_agree(setup):
    g, t, p, load = setup
    a = run_quasistatic(_P0(g), load, 4, t, p, warm_start=True)
    b = run_quasistatic(_P0(g), load, 4, t, p, warm_start=False)
    for x, y in zip(a.states, b.states):
        assert np.allclose(x.P, y.P, rtol=0, atol=1e-8 * max(np.abs(x.P).max(), 1e-12))


def test_stability_margins(setup):
    g, t, p, load = setup
    tr = run_quasistatic(_P0(g), load, 4, t, p)
    rep = stability_spot_check(tr.states[-1], 1.0, t, p, load, n_competitors=60, seed=3)
    assert rep.margins[0] == 0.0
    # u-only competitors cannot beat the equilibrium displacement
    assert np.all(rep.margins[3::3] >= -1e-10 * rep.scale)
    assert rep.passed


def test_failed_certificate_flags_trajectory(setup):
    g, t, p, load = setup
    cfg = SolverConfig(bcd_max_iter=1)
    tr = march(get_model(t, p, cfg), _P0(g), load, 5, cfg)
    assert tr.flagged and not tr.complete
    assert "certificate failed" in tr.message
    with pytest.raises(ValueError, match="flagged"):
        energy_ledger(tr, load, t, p)


def test_three_dimensional_run():
    g = build_grid(3, (8, 8, 8), (1.0, 1.0, 1.0), Collar.frame(2))
    t = build_neighbor_table(g, make_kernel("constant", 0.24, 3))
    p = MaterialParams(1.0, 10.0, 1.0, 0.05, n=3)
    load = LoadProgram.from_profile(g, "rotating_ramp", 20.0)
    tr = run_quasistatic(np.zeros((g.n_cells, 5)), load, 3, t, p)
    assert tr.complete
    led = energy_ledger(tr, load, t, p)
    assert np.all(led.upper_gap >= -1e-12 * led.scale)


def test_rejects_no_steps(setup):
    g, t, p, load = setup
    with pytest.raises(ValueError):
        run_quasistatic(_P0(g), load, 0, t, p)
