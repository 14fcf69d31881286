"""Named self-checks with fixed seeds.

Every check returns a JSON-ready dict with a boolean ``passed`` and the
measured quantities.  The checks use small geometries of their own so the
whole suite stays fast; material, families, seed and tolerances come from
the study configuration.
"""
from dataclasses import replace
import math

import numpy as np
import scipy.integrate

from . import energy as en, tensors
from .grid import Collar, apply_constraint, build_grid
from .kernel import build_neighbor_table, make_kernel, sphere_area
from .local_reference import get_local_model, run_local_quasistatic
from .nonlocal_ops import (State, cell_square_sums, nonlocal_divergence, nonlocal_divergence_plastic,
                           plastic_moment, seminorms)
from .quasistatic import energy_ledger, run_quasistatic, stability_spot_check
from .solver import get_model, inclusion_residual, prox_plastic_point, solve_increment_model


def _rng(seed, stream):
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(stream)))


def _kernel(cfg, family, delta, n):
    k = make_kernel(family, delta, n)
    if cfg.study.kernel_scale != 1.0:
        k = replace(k, c=k.c * cfg.study.kernel_scale)
    return k


def _table(cfg, grid, family, delta, mode=None):
    return build_neighbor_table(grid, _kernel(cfg, family, delta, grid.n), mode or cfg.kernel.mode)


def _f(x):
    return float(x)


# ---------------------------------------------------------------- kernels


def kernel_normalization(cfg):
    """Continuous kernel mass equals n, and a resolved analytic stencil reproduces it."""
    n = cfg.grid.n
    r = 32 if n == 2 else 8
    tol = 0.05 if n == 2 else 0.08
    grid = build_grid(n, [2 * r + 1] * n, [1.0] * n, Collar.frame(1))
    out = {"families": {}}
    ok = True
    for fam in cfg.kernel.families:
        k = _kernel(cfg, fam, r / (2 * r + 1), n)
        mass, _ = scipy.integrate.quad(lambda s: float(k.profile(s)) * s ** (n - 1), 0.0, k.delta,
                                       epsabs=0.0, epsrel=1e-13, limit=200)
        mass *= sphere_area(n)
        t = build_neighbor_table(grid, k, "analytic")
        disc = float(t.mass[t.full_stencil].mean())
        cont_err = abs(mass - n) / n
        disc_err = abs(disc - n) / n
        passed = cont_err <= 1e-10 and disc_err <= tol
        ok &= passed
        out["families"][fam] = {"continuous_mass": mass, "discrete_mass": disc,
                                "continuous_error": cont_err, "discrete_error": disc_err,
                                "passed": passed}
    out["discrete_tol"] = tol
    out["passed"] = bool(ok)
    return out


# ---------------------------------------------------------------- operators


def _op_grid(n):
    if n == 2:
        return build_grid(2, (32, 32), (1.0, 1.0), Collar.frame(5)), 0.15
    return build_grid(3, (12, 12, 12), (1.0, 1.0, 1.0), Collar.frame(3)), 0.24


def operator_identities(cfg, samples=5):
    grid, delta = _op_grid(cfg.grid.n)
    n = grid.n
    k = tensors.dev_dim(n)
    rng = _rng(cfg.seed, 1)
    worst = {"split": 0.0, "moment": 0.0, "affine": 0.0, "rigid": 0.0}
    for fam in cfg.kernel.families:
        table = _table(cfg, grid, fam, delta, "stencil")
        full = table.full_stencil
        for _ in range(samples):
            u = apply_constraint(grid, rng.standard_normal((grid.n_cells, n)))
            P = rng.standard_normal((grid.n_cells, k))
            E = nonlocal_divergence_plastic(u, P, table)
            D = nonlocal_divergence(u, table)
            M = plastic_moment(P, table)
            scale = np.abs(D).max() + np.abs(M).max()
            worst["split"] = max(worst["split"], _f(np.abs(E - (D - M)).max() / scale))
            Pn = tensors.frobenius_norm(P, n)
            worst["moment"] = max(worst["moment"], _f((np.abs(M[full]) / Pn[full]).max()))
            A = rng.standard_normal((n, n))
            Dx = nonlocal_divergence(grid.centers @ A.T, table)
            worst["affine"] = max(worst["affine"],
                                  _f(np.abs(Dx[full] - np.trace(A)).max() / max(1.0, abs(np.trace(A)))))
            W = rng.standard_normal((n, n))
            W = W - W.T
            u_r = rng.standard_normal(n) + grid.centers @ W.T
            rep = seminorms(State(u_r, np.zeros((grid.n_cells, k))), table)
            # a dilation of the same size sets the scale
            ref = seminorms(State(grid.centers, np.zeros_like(P)), table)
            worst["rigid"] = max(worst["rigid"], rep.s_semi / (ref.s_semi * np.abs(u_r).max()))
    tols = {"split": 1e-14, "moment": 1e-12, "affine": 1e-12, "rigid": 1e-14}
    flags = {key: worst[key] <= tols[key] for key in tols}
    return {"worst": worst, "tolerances": tols, "flags": flags, "passed": all(flags.values())}


def jensen_bounds(cfg, samples=100):
    """``D_i^2 <= m_i sum rho D^2 w`` (same for E) and the S/T triangle bounds."""
    grid, delta = _op_grid(cfg.grid.n)
    n = grid.n
    k = tensors.dev_dim(n)
    rng = _rng(cfg.seed, 2)
    worst_D = worst_E = worst_tri = -math.inf
    tables = [_table(cfg, grid, fam, delta) for fam in cfg.kernel.families]
    w = grid.w
    for m in range(samples):
        table = tables[m % len(tables)]
        u = apply_constraint(grid, rng.standard_normal((grid.n_cells, n)) * rng.uniform(0.1, 10))
        P = rng.standard_normal((grid.n_cells, k)) * rng.uniform(0.1, 10)
        sums = cell_square_sums(u, P, table)
        D = nonlocal_divergence(u, table)
        E = nonlocal_divergence_plastic(u, P, table)
        bD = table.mass * sums[:, 0] * w
        bE = table.mass * sums[:, 1] * w
        # relative excess over the bound where it is nonzero; a zero bound
        # forces a zero divergence
        for val, bound, key in ((D, bD, "D"), (E, bE, "E")):
            nz = bound > 0
            if np.any(val[~nz] != 0):
                excess = math.inf
            else:
                excess = _f(((val[nz] ** 2 - bound[nz]) / bound[nz]).max())
            if key == "D":
                worst_D = max(worst_D, excess)
            else:
                worst_E = max(worst_E, excess)
        rep = seminorms(State(u, P), table)
        g1, g2 = rep.triangle_gaps(n)
        sc = rep.s_semi + rep.t_semi + rep.l2_P
        worst_tri = max(worst_tri, -min(g1, g2) / sc)
    tol = 1e-12
    passed = worst_D <= tol and worst_E <= tol and worst_tri <= tol
    return {"samples": samples, "worst_excess_D": worst_D, "worst_excess_E": worst_E,
            "worst_triangle_violation": worst_tri, "tol": tol, "passed": bool(passed)}


# ---------------------------------------------------------------- prox


def prox_objective(M, g, s, Q):
    """``1/2 Q.M Q + g.Q + s|Q|`` for a batch of points Q (..., k)."""
    return (0.5 * np.einsum("...a,ab,...b->...", Q, M, Q) + Q @ g
            + s * np.linalg.norm(Q, axis=-1))


def brute_force_prox(M, g, s, levels=60, shrink=0.7):
    """Nested grid search for the prox minimizer; returns the best value found.

    The grid axes are an orthonormal frame whose first axis is ``-g``: when
    ``|g|`` barely exceeds ``s`` the descent directions form a thin cone
    around ``-g`` that an axis-aligned grid in five dimensions misses.
    """
    k = g.size
    pts = 7 if k <= 2 else 5
    lmin = np.linalg.eigvalsh(M)[0]
    R = max(np.linalg.norm(g) / lmin, 1e-12)
    seed = np.eye(k)
    seed[:, 0] = -g if np.any(g) else seed[:, 0]
    frame, _ = np.linalg.qr(seed)
    frame[:, 0] *= np.sign(frame[:, 0] @ seed[:, 0]) or 1.0
    axis = np.linspace(-1.0, 1.0, pts)
    stencil = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k) @ frame.T
    c = np.zeros(k)
    best = prox_objective(M, g, s, c)
    for _ in range(levels):
        cand = c + R * stencil
        vals = prox_objective(M, g, s, cand)
        j = int(np.argmin(vals))
        if vals[j] <= best:
            best = vals[j]
            c = cand[j]
        R *= shrink
    return float(best), c


def random_prox_instance(rng, k):
    V, _ = np.linalg.qr(rng.standard_normal((k, k)))
    lam = np.exp(rng.uniform(np.log(0.3), np.log(3.0), k))
    M = (V * lam) @ V.T
    M = 0.5 * (M + M.T)
    g = rng.standard_normal(k)
    s = float(rng.uniform(0.0, 1.3) * np.linalg.norm(g))
    return M, g, s


def prox_oracle(cfg, instances=200):
    rng = _rng(cfg.seed, 3)
    worst_gap = worst_incl = worst_iso = 0.0
    below = 0
    for m in range(instances):
        k = 2 if m % 2 == 0 else 5
        M, g, s = random_prox_instance(rng, k)
        Q = prox_plastic_point(M, g, s, np.zeros(k), tol=cfg.solver.prox_root_tol)
        val = float(prox_objective(M, g, s, Q))
        brute, _ = brute_force_prox(M, g, s)
        worst_gap = max(worst_gap, abs(val - brute))
        below += val > brute + 1e-12
        scale = np.linalg.norm(g) + s
        incl = inclusion_residual(M[None], Q[None], g[None], s)[0] / scale
        worst_incl = max(worst_incl, float(incl))
        mu = float(rng.uniform(0.5, 2.0))
        Qi = prox_plastic_point(mu * np.eye(k), g, s, np.zeros(k), tol=cfg.solver.prox_root_tol)
        gn = np.linalg.norm(g)
        closed = -max(0.0, 1.0 - s / gn) * g / mu
        worst_iso = max(worst_iso, float(np.abs(Qi - closed).max() / (np.abs(closed).max() + 1e-300))
                        if np.any(closed) else float(np.abs(Qi).max()))
    passed = worst_gap <= 1e-4 and worst_incl <= 1e-10 and worst_iso <= 1e-12 and below == 0
    return {"instances": instances, "worst_objective_gap": worst_gap,
            "worst_inclusion_residual": worst_incl, "worst_isotropic_mismatch": worst_iso,
            "prox_above_brute_force": int(below), "passed": bool(passed)}


# ---------------------------------------------------------------- solver


def _plastic_setup(cfg, cells, delta, collar, family=None):
    n = cfg.grid.n
    grid = build_grid(n, [cells] * n, [1.0] * n, Collar.frame(collar))
    table = _table(cfg, grid, family or cfg.kernel.families[0], delta)
    ld = cfg.load
    load = en.LoadProgram.from_profile(grid, ld.profile, ld.amplitude, ld.times, ld.values, ld.direction)
    return grid, table, load


def _solver_grid(n):
    return (32, 0.12, 4) if n == 2 else (12, 0.24, 3)


def solver_certificate(cfg):
    """A plastic increment from rest: certificate, descent and uniqueness."""
    cells, delta, collar = _solver_grid(cfg.grid.n)
    grid, table, load = _plastic_setup(cfg, cells, delta, collar)
    params = cfg.material_params()
    scfg = cfg.solver_config()
    model = get_model(table, params, scfg)
    k = tensors.dev_dim(grid.n)
    P_old = np.zeros((grid.n_cells, k))
    b = load(load.T)
    st1, c1 = solve_increment_model(model, P_old, b, scfg)
    rng = _rng(cfg.seed, 4)
    init = State(apply_constraint(grid, rng.standard_normal((grid.n_cells, grid.n))),
                 rng.standard_normal((grid.n_cells, k)))
    st2, c2 = solve_increment_model(model, P_old, b, scfg, init)
    hist = np.asarray(c1.energy_history)
    rise = float(np.max(np.diff(hist) / np.maximum(np.abs(hist[1:]), 1e-300), initial=0.0))
    du = float(np.linalg.norm(st1.u - st2.u) / max(np.linalg.norm(st1.u), 1e-300))
    dP = float(np.linalg.norm(st1.P - st2.P) / max(np.linalg.norm(st1.P), 1e-300))
    flowing = int(np.count_nonzero(np.any(st1.P != 0, axis=1)))
    tol = scfg.cert_tol
    passed = (c1.passed and c2.passed and rise <= 1e-13 and du <= tol and dP <= tol and flowing > 0)
    return {"first": c1.summary(), "second": c2.summary(), "max_relative_energy_rise": rise,
            "init_mismatch_u": du, "init_mismatch_P": dP, "plastic_cells": flowing,
            "passed": bool(passed)}


def _ledger_grid(n):
    return (24, 0.15, 4) if n == 2 else (10, 0.3, 3)


def ledger_run(cfg, steps, local=False):
    cells, delta, collar = _ledger_grid(cfg.grid.n)
    grid, table, load = _plastic_setup(cfg, cells, delta, collar)
    params = cfg.material_params()
    scfg = cfg.solver_config()
    P0 = np.zeros((grid.n_cells, tensors.dev_dim(grid.n)))
    if local:
        traj = run_local_quasistatic(P0, load, steps, grid, params, scfg)
        where = grid
    else:
        traj = run_quasistatic(P0, load, steps, table, params, scfg)
        where = table
    return traj, load, where, params


def ledger_upper_estimate(cfg, steps=40):
    traj, load, table, params = ledger_run(cfg, steps)
    if traj.flagged:
        return {"passed": False, "message": traj.message}
    led = energy_ledger(traj, load, table, params)
    traj2, load2, table2, _ = ledger_run(cfg, 2 * steps)
    if traj2.flagged:
        return {"passed": False, "message": traj2.message}
    led2 = energy_ledger(traj2, load2, table2, params)
    worst = float(np.min(led.upper_gap[1:]) / led.scale)
    res1 = float(led.balance_residual[-1] / led.scale)
    res2 = float(led2.balance_residual[-1] / led2.scale)
    passed = worst >= -1e-12 and res2 < res1 and led.Diss[-1] > 0
    return {"steps": steps, "min_upper_gap": worst, "balance_residual": res1,
            "balance_residual_refined": res2, "dissipation": float(led.Diss[-1]),
            "passed": bool(passed)}


def stability(cfg, steps=10):
    traj, load, table, params = ledger_run(cfg, steps)
    if traj.flagged:
        return {"passed": False, "message": traj.message}
    rep = stability_spot_check(traj.states[-1], traj.times[-1], table, params, load,
                               cfg.study.stability_competitors, cfg.seed, cfg.solver_config())
    others = float(rep.margins[1:].min()) if rep.margins.size > 1 else 0.0
    return {"competitors": int(rep.margins.size), "worst_margin": rep.worst / rep.scale,
            "worst_nontrivial_margin": others / rep.scale,
            "tol": rep.tol / rep.scale, "passed": rep.passed}


# ---------------------------------------------------------------- local model


def local_consistency(cfg, steps=10):
    """Both local energy forms agree, the shrinkage is the isotropic prox, the ledger holds."""
    traj, load, grid, params = ledger_run(cfg, steps, local=True)
    if traj.flagged:
        return {"passed": False, "message": traj.message}
    worst_form = 0.0
    for s, t in zip(traj.states, traj.times):
        a = en.local_energy_F0(s, t, grid, params, load, "lame")
        b = en.local_energy_F0(s, t, grid, params, load, "sphere")
        worst_form = max(worst_form, abs(a - b) / max(abs(a), 1e-300))
    model = get_local_model(grid, params)
    k = model.k
    last = traj.states[-1]
    q = tensors.to_orthonormal(last.P, grid.n)
    g = model.grad_q(last.u, q)
    m = model.isotropic
    gn = np.linalg.norm(g, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = -np.where(gn > model.s, (gn - model.s) / (m * gn), 0.0)[:, None] * g
    pts = np.array([prox_plastic_point(m * np.eye(k), g[i], model.s, np.zeros(k),
                                       cfg.solver.prox_root_tol) for i in range(0, grid.n_cells, 7)])
    ref = shrink[::7]
    sc = max(np.abs(ref).max(), 1e-300)
    worst_prox = float(np.abs(pts - ref).max() / sc) if np.any(ref) else float(np.abs(pts).max())
    led = energy_ledger(traj, load, grid, params)
    gap = float(np.min(led.upper_gap[1:]) / led.scale)
    passed = worst_form <= 1e-12 and worst_prox <= 1e-12 and gap >= -1e-12
    return {"form_mismatch": worst_form, "prox_mismatch": worst_prox, "min_upper_gap": gap,
            "passed": bool(passed)}


# ---------------------------------------------------------------- Korn


def korn_positivity(cfg):
    from .studies import inverse_power_min, rigid_probes, seminorm_gram

    n = cfg.grid.n
    cells, delta, collar = (20, 0.15, 3) if n == 2 else (8, 0.3, 3)
    rows = []
    ok = True
    for width in (collar, 1):
        grid = build_grid(n, [cells] * n, [1.0] * n, Collar.frame(width))
        free = grid.free_dofs()
        for fam in cfg.kernel.families:
            A = seminorm_gram(_table(cfg, grid, fam, delta))
            lam, _, its = inverse_power_min(A, np.full(A.shape[0], grid.w), cfg.study.korn_tol,
                                            cfg.study.korn_max_iter, cfg.seed)
            rq = min(float(x @ A @ x) / (grid.w * float(x @ x))
                     for x in (p.ravel()[free] for p in rigid_probes(grid)))
            rows.append({"family": fam, "collar": width, "lambda_min": lam, "probe_min_rq": rq})
            ok &= lam > 0 and rq > 0
    return {"rows": rows, "passed": bool(ok)}


def config_roundtrip(cfg):
    from .config import parse_config

    again = parse_config(cfg.to_yaml())
    return {"passed": again.to_dict() == cfg.to_dict()}


CHECKS = {
    "kernel_normalization": kernel_normalization,
    "operator_identities": operator_identities,
    "jensen_bounds": jensen_bounds,
    "prox_oracle": prox_oracle,
    "solver_certificate": solver_certificate,
    "ledger_upper_estimate": ledger_upper_estimate,
    "stability": stability,
    "local_consistency": local_consistency,
    "korn_positivity": korn_positivity,
    "config_roundtrip": config_roundtrip,
}
