"""Time stepping of the incremental problem and energetic bookkeeping."""
from dataclasses import dataclass, field
import math

import numpy as np

from . import energy as en
from .grid import Grid, apply_constraint
from .nonlocal_ops import State
from .solver import SolverConfig, get_model, solve_increment_model


@dataclass
class Trajectory:
    times: np.ndarray
    states: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    flagged: bool = False
    message: str = ""

    @property
    def N(self):
        return len(self.times) - 1

    @property
    def complete(self):
        return len(self.states) == len(self.times)


def march(model, initial_P, load, N, cfg, warm_start=True, times=None):
    """Solve the incremental problems on a uniform partition of ``[0, T]``.

    The first state comes from an incremental solve at t = 0 with
    ``P_old = initial_P``, so the trajectory starts from a stable state.
    A failed certificate stops the march and flags the trajectory.
    """
    if int(N) < 1:
        raise ValueError("need at least one time step")
    if times is None:
        times = np.linspace(0.0, load.T, int(N) + 1)
    traj = Trajectory(times=np.asarray(times, dtype=float))
    P_old = np.asarray(initial_P, dtype=float).reshape(model.grid.n_cells, -1)
    prev = None
    for i, t in enumerate(traj.times):
        init = prev if (warm_start and prev is not None) else None
        state, cert = solve_increment_model(model, P_old, load(t), cfg, init)
        traj.states.append(state)
        traj.certificates.append(cert)
        if not cert.passed:
            traj.flagged = True
            traj.message = f"step {i} (t={t:g}): certificate failed ({cert.message})"
            break
        prev = state
        P_old = state.P
    return traj


def run_quasistatic(initial_P, load, N, table, params, cfg=SolverConfig(), warm_start=True):
    return march(get_model(table, params, cfg), initial_P, load, N, cfg, warm_start)


def _energy_fn(table, params, load):
    if isinstance(table, Grid):
        return lambda s, t: en.local_energy_F0(s, t, table, params, load), table
    return lambda s, t: en.energy_F(s, t, table, params, load), table.grid


@dataclass
class EnergyLedger:
    times: np.ndarray
    F: np.ndarray
    H: np.ndarray
    Diss: np.ndarray
    work: np.ndarray
    upper_gap: np.ndarray
    balance_residual: np.ndarray
    scale: float

    def rows(self):
        for m in range(len(self.times)):
            yield {"step": m, "t": self.times[m], "F": self.F[m], "H_step": self.H[m],
                   "Diss": self.Diss[m], "work": self.work[m], "upper_gap": self.upper_gap[m],
                   "balance_residual": self.balance_residual[m]}


def energy_ledger(traj, load, table, params):
    """Energies, dissipation and work along a trajectory.

    ``table`` is a neighbour table (nonlocal energy) or a grid (local energy).
    ``upper_gap[m] = F_0 + work_m - F_m - Diss_m`` is nonnegative for exact
    incremental minimizers.
    """
    if traj.flagged or not traj.complete:
        raise ValueError(f"trajectory is flagged: {traj.message}")
    F_of, grid = _energy_fn(table, params, load)
    ts = traj.times
    S = traj.states
    m = len(ts)
    F = np.array([F_of(S[i], ts[i]) for i in range(m)])
    H = np.zeros(m)
    W = np.zeros(m)
    for i in range(1, m):
        H[i] = en.dissipation_H(S[i].P, S[i - 1].P, grid, params)
        W[i] = -en.work(S[i - 1].u, load(ts[i]) - load(ts[i - 1]), grid.w)
    Diss = np.cumsum(H)
    work = np.cumsum(W)
    gap = F[0] + work - F - Diss
    scale = max(float(np.max(np.abs(F))), float(Diss[-1]), float(np.max(np.abs(work))), 1e-300)
    return EnergyLedger(times=ts.copy(), F=F, H=H, Diss=Diss, work=work, upper_gap=gap,
                        balance_residual=np.abs(gap), scale=scale)


def _bump_field(rng, grid, ncomp, amp):
    """Random smooth field: a few low sine modes on the unit box."""
    x = grid.centers / np.asarray(grid.extent)
    out = np.zeros((grid.n_cells, ncomp))
    for c in range(ncomp):
        for _ in range(2):
            k = rng.integers(1, 4, size=grid.n)
            ph = rng.uniform(0, 2 * np.pi, size=grid.n)
            out[:, c] += rng.normal() * np.prod(np.sin(np.pi * k * x + ph), axis=1)
    return amp * out


@dataclass
class StabilityReport:
    margins: np.ndarray
    worst: float
    scale: float
    tol: float
    passed: bool


def stability_spot_check(state, t, table, params, load, n_competitors=100, seed=0,
                         cfg=SolverConfig()):
    """Sample competitors and check ``F(z) <= F(z_hat) + H(P_hat - P)``.

    Competitors: the state itself, pure displacement perturbations, random
    smooth bumps in (u, P) over several amplitudes, and the segment family
    ``z + s (z_hat - z)`` towards random bumped states.
    """
    F_of, grid = _energy_fn(table, params, load)
    rng = np.random.Generator(np.random.Philox(seed))
    u = np.asarray(state.u, dtype=float).reshape(grid.n_cells, grid.n)
    P = np.asarray(state.P, dtype=float).reshape(grid.n_cells, -1)
    F0 = F_of(State(u, P), t)
    ua = float(np.sqrt(np.mean(u * u))) or 1.0
    Pa = float(np.sqrt(np.mean(P * P))) or ua
    scale = abs(F0) + 1e-300
    margins = [0.0]
    for c in range(1, n_competitors):
        amp = 10.0 ** rng.uniform(-4, 0)
        kind = c % 3
        du = apply_constraint(grid, _bump_field(rng, grid, grid.n, amp * ua))
        dP = _bump_field(rng, grid, P.shape[1], amp * Pa)
        if kind == 0:
            dP[:] = 0.0
        elif kind == 2:
            sfac = rng.uniform(-1, 1)
            du *= sfac
            dP *= sfac
        cand = State(u + du, P + dP)
        m = F_of(cand, t) + en.dissipation_H(cand.P, P, grid, params) - F0
        margins.append(m)
    margins = np.array(margins)
    worst = float(margins.min())
    tol = cfg.cert_tol * scale
    return StabilityReport(margins=margins, worst=worst, scale=scale, tol=tol,
                           passed=bool(worst >= -tol))
