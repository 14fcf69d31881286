"""Horizon sweeps, energy localization, Korn constants and the verify suite."""
from dataclasses import dataclass, field, replace
import math
import time

import numpy as np
import scipy.linalg

from . import _kernels, energy as en, tensors
from .grid import Collar, apply_constraint, build_grid
from .kernel import build_neighbor_table, make_kernel
from .local_reference import local_gradient_tensor, run_local_quasistatic
from .nonlocal_ops import State, plastic_moment, stencil_args
from .quasistatic import run_quasistatic


class StudyError(RuntimeError):
    """A trajectory inside a study failed its certificate."""


def make_load(cfg, grid):
    ld = cfg.load
    return en.LoadProgram.from_profile(grid, ld.profile, ld.amplitude, times=ld.times,
                                       values=ld.values, direction=ld.direction)


def make_table(cfg, grid, family, delta):
    k = make_kernel(family, delta, grid.n)
    if cfg.study.kernel_scale != 1.0:
        k = replace(k, c=k.c * cfg.study.kernel_scale)
    return build_neighbor_table(grid, k, cfg.kernel.mode)


def _clock():
    return time.perf_counter()


# ---------------------------------------------------------------- delta sweep


@dataclass
class ConvergenceReport:
    rows: list
    monotone: dict
    passed: bool
    runtime: dict = field(default_factory=dict)
    columns: tuple = ("family", "delta", "e_u", "e_P", "e_P_block", "rate_u", "rate_P")


def _block_mean(grid, field_, b, mask):
    """Averages of ``field_`` over b^n cell blocks lying inside ``mask``."""
    cells = tuple(c // b for c in grid.cells)
    n = grid.n
    trim = tuple(slice(0, c * b) for c in cells)
    F = grid.reshape(field_)[trim]
    M = grid.reshape(mask.astype(float))[trim]
    shape = []
    for c in cells:
        shape += [c, b]
    F = F.reshape(tuple(shape) + F.shape[n:])
    M = M.reshape(tuple(shape))
    ax = tuple(range(1, 2 * n, 2))
    full = M.mean(axis=ax) == 1.0
    return F.mean(axis=ax)[full], float(np.prod([b] * n) * grid.w)


def _l2(x, w):
    return math.sqrt(w * math.fsum((np.asarray(x) ** 2).ravel()))


def field_errors(traj, ref, grid, mask, block):
    e_u = e_P = e_B = 0.0
    for s, r in zip(traj.states, ref.states):
        e_u = max(e_u, _l2((s.u - r.u)[mask], grid.w))
        Ps = tensors.to_matrix(s.P, grid.n).reshape(grid.n_cells, -1)
        Pr = tensors.to_matrix(r.P, grid.n).reshape(grid.n_cells, -1)
        e_P = max(e_P, _l2((Ps - Pr)[mask], grid.w))
        bs, wb = _block_mean(grid, Ps, block, mask)
        br, _ = _block_mean(grid, Pr, block, mask)
        e_B = max(e_B, _l2(bs - br, wb))
    return e_u, e_P, e_B


def _rate(a, b, da, db):
    if a > 0 and b > 0:
        return math.log(a / b) / math.log(da / db)
    return float("nan")


def delta_sweep_study(cfg):
    """Nonlocal trajectories per (family, delta) against the local reference.

    Errors are sup-over-time L2 distances on cells at distance >= max(delta)
    from the boundary; ``e_P_block`` compares block averages of P.
    """
    grid = cfg.build_grid()
    params = cfg.material_params()
    scfg = cfg.solver_config()
    load = make_load(cfg, grid)
    P0 = np.zeros((grid.n_cells, tensors.dev_dim(grid.n)))
    N = cfg.steps
    deltas = list(cfg.kernel.deltas)
    mask = grid.interior_mask(max(deltas))
    runtime = {}
    t0 = _clock()
    ref = run_local_quasistatic(P0, load, N, grid, params, scfg)
    runtime["local"] = _clock() - t0
    if ref.flagged:
        raise StudyError(f"local reference: {ref.message}")
    rows, monotone = [], {}
    for fam in cfg.kernel.families:
        errs = []
        for d in deltas:
            t0 = _clock()
            tr = run_quasistatic(P0, load, N, make_table(cfg, grid, fam, d), params, scfg)
            runtime[f"{fam}:{d}"] = _clock() - t0
            if tr.flagged:
                raise StudyError(f"{fam}, delta={d}: {tr.message}")
            errs.append(field_errors(tr, ref, grid, mask, cfg.study.block))
        for m, (d, e) in enumerate(zip(deltas, errs)):
            ru = rp = float("nan")
            if m > 0:
                ru = _rate(errs[m - 1][0], e[0], deltas[m - 1], d)
                rp = _rate(errs[m - 1][2], e[2], deltas[m - 1], d)
            rows.append({"family": fam, "delta": d, "e_u": e[0], "e_P": e[1], "e_P_block": e[2],
                         "rate_u": ru, "rate_P": rp})
        # a column that vanishes identically (zero load, or no plastic flow
        # anywhere) carries no trend and counts as satisfied
        dec = lambda col: (all(e[col] == 0 for e in errs)
                           or all(b[col] < a[col] for a, b in zip(errs, errs[1:])))
        monotone[fam] = bool(dec(0) and dec(2))
    need = min(cfg.study.min_monotone_families, len(cfg.kernel.families))
    passed = sum(monotone.values()) >= need
    return ConvergenceReport(rows=rows, monotone=monotone, passed=passed, runtime=runtime)


# ---------------------------------------------------------------- energy localization


def manufactured_fields(grid):
    """Smooth test pair on the unit box.

    ``u`` is a polynomial times ``(x(1-x)y(1-y))^3``; P is deviatoric with
    amplitude ``(sin pi x sin pi y)^6`` and a slowly turning orientation.
    """
    x = grid.centers / np.asarray(grid.extent)
    n = grid.n
    bub = np.prod(x * (1 - x), axis=1)
    u = np.zeros((grid.n_cells, n))
    u[:, 0] = 40.0 * bub ** 3 * (1.0 + x[:, 0] - 0.5 * x[:, 1])
    u[:, 1] = 40.0 * bub ** 3 * (0.5 + x[:, 0] * x[:, 1])
    if n == 3:
        u[:, 2] = 40.0 * bub ** 3 * (x[:, 2] - 0.3)
    amp = np.prod(np.sin(np.pi * x), axis=1) ** 6
    theta = np.pi * (x[:, 0] + 0.5 * x[:, 1])
    k = tensors.dev_dim(n)
    c = np.zeros((grid.n_cells, k))
    c[:, 0] = amp * np.cos(theta) / math.sqrt(2)
    c[:, 1] = amp * np.sin(theta) / math.sqrt(2)
    return u, c


@dataclass
class EnergyReport:
    rows: list
    flags: dict
    passed: bool
    runtime: dict = field(default_factory=dict)
    columns: tuple = ("family", "delta", "h", "F_delta", "F_0", "err_F", "err_div_term",
                      "err_alpha_term", "moment_norm")


def pointwise_energy_convergence_study(cfg, fields_fn=manufactured_fields):
    params = cfg.material_params()
    n = cfg.grid.n
    ratio = cfg.study.energy_h_ratio
    rows, flags, runtime = [], {}, {}
    for fam in cfg.kernel.families:
        col = []
        for d in cfg.kernel.deltas:
            t0 = _clock()
            cells = [int(round(L / (d / ratio))) for L in cfg.grid.extent]
            grid = build_grid(n, cells, cfg.grid.extent, Collar.frame(1))
            table = make_table(cfg, grid, fam, d)
            u, P = fields_fn(grid)
            st = State(u, P)
            terms = en.energy_terms(st, table, params)
            F_d = terms["alpha"] + terms["beta"] + terms["gamma"]
            F_0 = en.local_quadratic(st, grid, params, form="lame")
            gradu = local_gradient_tensor(u, grid)
            div = np.trace(gradu, axis1=1, axis2=2)
            div_t = params.beta * grid.w * math.fsum(div ** 2)
            Pm = tensors.to_matrix(P, n)
            a_t = grid.w * math.fsum(en.sphere_shear_density(gradu, Pm, params.alpha))
            mom = _l2(plastic_moment(P, table), grid.w)
            runtime[f"{fam}:{d}"] = _clock() - t0
            row = {"family": fam, "delta": d, "h": float(grid.h[0]), "F_delta": F_d, "F_0": F_0,
                   "err_F": abs(F_d - F_0), "err_div_term": abs(terms["beta"] - div_t),
                   "err_alpha_term": abs(terms["alpha"] - a_t), "moment_norm": mom}
            rows.append(row)
            col.append(row)
        dec = lambda k: (all(r[k] == 0 for r in col)
                         or all(b[k] < a[k] for a, b in zip(col, col[1:])))
        first = col[0]["moment_norm"]
        flags[fam] = {
            "err_F_decreasing": bool(dec("err_F")),
            "err_div_decreasing": bool(dec("err_div_term")),
            "err_alpha_decreasing": bool(dec("err_alpha_term")),
            "moment_decay": bool(first == 0 or col[-1]["moment_norm"] < 1e-3 * first),
        }
    passed = all(f["err_F_decreasing"] and f["moment_decay"] for f in flags.values())
    return EnergyReport(rows=rows, flags=flags, passed=passed, runtime=runtime)


# ---------------------------------------------------------------- Korn constants


def seminorm_gram(table):
    """Matrix of ``|u|_S^2`` on the free dofs."""
    g = table.grid
    return _kernels.pair_gram(g.free_index, g.free_dofs().size, *stencil_args(table), g.w ** 2)


def inverse_power_min(A, Mdiag, tol=1e-8, max_iter=500, seed=0):
    """Smallest eigenvalue of ``A v = lam diag(Mdiag) v`` by inverse iteration."""
    s = np.sqrt(Mdiag)
    B = A / np.outer(s, s)
    try:
        cho = scipy.linalg.cho_factor(B, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return 0.0, None, 0
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(B.shape[0])
    v /= np.linalg.norm(v)
    lam = v @ B @ v
    for it in range(1, max_iter + 1):
        y = scipy.linalg.cho_solve(cho, v, check_finite=False)
        v = y / np.linalg.norm(y)
        lam_new = v @ B @ v
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return float(lam_new), v / s, it
        lam = lam_new
    raise StudyError(f"inverse power iteration stagnated after {max_iter} iterations")


def rigid_probes(grid):
    """Translations and infinitesimal rotations, restricted to the free cells."""
    x = grid.centers - 0.5 * np.asarray(grid.extent)
    n = grid.n
    out = []
    for a in range(n):
        u = np.zeros((grid.n_cells, n))
        u[:, a] = 1.0
        out.append(u)
    for a in range(n):
        for b in range(a + 1, n):
            u = np.zeros((grid.n_cells, n))
            u[:, a] = -x[:, b]
            u[:, b] = x[:, a]
            out.append(u)
    return [apply_constraint(grid, u) for u in out]


@dataclass
class KornReport:
    rows: list
    passed: bool
    runtime: dict = field(default_factory=dict)
    columns: tuple = ("family", "delta", "collar", "lambda_min", "C", "iterations", "probe_min_rq")


def korn_constant_study(cfg):
    widths = list(cfg.study.korn_collar_widths) or [cfg.grid.collar.get("width", 1)]
    rows, runtime = [], {}
    ok = True
    for width in widths:
        col = dict(cfg.grid.collar)
        col["width"] = int(width)
        grid = build_grid(cfg.grid.n, cfg.grid.cells, cfg.grid.extent, Collar(**col))
        probes = rigid_probes(grid)
        free = grid.free_dofs()
        for fam in cfg.kernel.families:
            for d in cfg.kernel.deltas:
                t0 = _clock()
                table = make_table(cfg, grid, fam, d)
                A = seminorm_gram(table)
                mdiag = np.full(A.shape[0], grid.w)
                lam, _, its = inverse_power_min(A, mdiag, cfg.study.korn_tol,
                                                cfg.study.korn_max_iter, cfg.seed)
                rq = []
                for p in probes:
                    x = p.ravel()[free]
                    rq.append(float(x @ A @ x) / (grid.w * float(x @ x)))
                runtime[f"{width}:{fam}:{d}"] = _clock() - t0
                rows.append({"family": fam, "delta": d, "collar": int(width), "lambda_min": lam,
                             "C": 1.0 / lam if lam > 0 else float("inf"), "iterations": its,
                             "probe_min_rq": min(rq)})
                ok &= lam > 0 and min(rq) > 0
    return KornReport(rows=rows, passed=bool(ok), runtime=runtime)


# ---------------------------------------------------------------- verify suite


@dataclass
class VerifyReport:
    checks: dict
    passed: bool
    runtime: dict = field(default_factory=dict)

    def to_dict(self, reproducible=False):
        out = {"passed": self.passed, "checks": self.checks}
        if not reproducible:
            out["runtime"] = self.runtime
        return out


def verify_suite(cfg):
    """Run the named checks (all, or ``cfg.study.checks``); failures are data."""
    from .checks import CHECKS

    names = list(cfg.study.checks or CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s) {unknown}; available: {sorted(CHECKS)}")
    results, runtime = {}, {}
    for name in names:
        t0 = _clock()
        try:
            results[name] = CHECKS[name](cfg)
        except Exception as exc:   # a crashing check is a failed check
            results[name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        runtime[name] = _clock() - t0
    ok = all(r["passed"] for r in results.values())
    return VerifyReport(checks=results, passed=bool(ok), runtime=runtime)
