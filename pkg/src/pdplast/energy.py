"""Energies of the nonlocal and local linearized elastoplastic models.

The nonlocal quadratic part is

    B(z, z) = beta * int Ddiv(u)^2
            + alpha * int int rho (E(u,P) - Ediv(u,P)/n)^2
            + gamma * int |P|^2

and the energy at time t is ``F = B(z, z) - int b(t).u``.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import _kernels, tensors
from .grid import is_admissible
from .nonlocal_ops import _check_P, _check_u, nonlocal_divergence, stencil_args


def lame_convert(alpha, beta, n):
    """Lamé constants ``(lambda, mu)`` of the nonlocal moduli."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    lam = 2.0 * beta - 4.0 * alpha / (n * (n + 2))
    mu = 2.0 * alpha / (n + 2)
    if n * lam + 2.0 * mu <= 0:
        # unreachable for positive moduli (n lam + 2 mu = 2 n beta) but kept as a guard
        warnings.warn("non-coercive Lamé pair: n*lambda + 2*mu <= 0")
    return lam, mu


@dataclass(frozen=True)
class MaterialParams:
    alpha: float
    beta: float
    gamma: float
    sigma_y: float
    n: int = 2

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "sigma_y"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")

    @property
    def lam(self):
        return lame_convert(self.alpha, self.beta, self.n)[0]

    @property
    def mu(self):
        return lame_convert(self.alpha, self.beta, self.n)[1]

    def with_(self, **kw):
        d = dict(alpha=self.alpha, beta=self.beta, gamma=self.gamma, sigma_y=self.sigma_y, n=self.n)
        d.update(kw)
        return MaterialParams(**d)


@dataclass(frozen=True, eq=False)
class LoadProgram:
    """Body force ``b(t)``, piecewise linear between knots."""
    times: np.ndarray
    fields: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.fields, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("need at least one knot")
        if t[0] != 0.0:
            raise ValueError("first knot must be t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot times must be strictly increasing")
        if f.ndim != 3 or f.shape[0] != t.size:
            raise ValueError("fields must have shape (knots, cells, n)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fields", f)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def shape(self):
        return self.fields.shape[1:]

    def __call__(self, t):
        t = float(t)
        ts = self.times
        if t < -1e-14 or t > ts[-1] * (1 + 1e-14) + 1e-14:
            raise ValueError(f"time {t} outside [0, {ts[-1]}]")
        if ts.size == 1:
            return self.fields[0].copy()
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        th = (t - ts[k]) / (ts[k + 1] - ts[k])
        th = min(max(th, 0.0), 1.0)
        return (1.0 - th) * self.fields[k] + th * self.fields[k + 1]

    def scaled(self, factor):
        return LoadProgram(self.times.copy(), self.fields * factor)

    def retimed(self, factor):
        """Same knot values reached at ``factor`` times the original times."""
        return LoadProgram(self.times * factor, self.fields.copy())

    @classmethod
    def zero(cls, grid, T=1.0):
        return cls(np.array([0.0, T]), np.zeros((2, grid.n_cells, grid.n)))

    @classmethod
    def from_profile(cls, grid, profile, amplitude, times=(0.0, 1.0), values=None, direction=None):
        """Build standard load programs on ``grid``.

        ``constant``: uniform vector ``amplitude * direction`` scaled by the knot values.
        ``shear_ramp``: ``b = amplitude * s(t) * sin(pi y) e_x`` (in-plane shear).
        ``rotating_ramp``: uniform magnitude ``amplitude * s(t)`` turning by a
        quarter circle in the x-y plane over the program.
        """
        times = np.asarray(times, dtype=float)
        if values is None:
            values = times / times[-1] if times[-1] > 0 else np.zeros_like(times)
        values = np.asarray(values, dtype=float)
        if values.shape != times.shape:
            raise ValueError("one load value per knot")
        n = grid.n
        x = grid.centers / np.asarray(grid.extent)
        out = np.zeros((times.size, grid.n_cells, n))
        if profile == "constant":
            d = np.zeros(n) if direction is None else np.asarray(direction, dtype=float)
            if direction is None:
                d[0] = 1.0
            if d.shape != (n,):
                raise ValueError("direction must have one entry per axis")
            out[:] = values[:, None, None] * amplitude * d
        elif profile == "shear_ramp":
            shape = np.sin(np.pi * x[:, 1])
            out[:, :, 0] = values[:, None] * amplitude * shape
        elif profile == "rotating_ramp":
            theta = 0.5 * np.pi * times / times[-1]
            out[:, :, 0] = (values * np.cos(theta))[:, None] * amplitude
            out[:, :, 1] = (values * np.sin(theta))[:, None] * amplitude
        else:
            raise ValueError(f"unknown load profile {profile!r}")
        return cls(times, out)


def _q(table, P):
    return np.ascontiguousarray(tensors.to_orthonormal(_check_P(table, P), table.grid.n))


def _terms(table, params, u, P):
    u = _check_u(table, u)
    q = _q(table, P)
    n = table.grid.n
    w = table.grid.w
    D = nonlocal_divergence(u, table)
    Ediv = D - np.einsum("ik,ik->i", table.moment1, q)
    return u, q, D, Ediv, n, w


def energy_terms(state, table, params):
    """Split of the quadratic energy into its beta-, alpha- and gamma-terms."""
    u, q, D, Ediv, n, w = _terms(table, params, state.u, state.P)
    sums = _kernels.cell_square_sums(u, q, Ediv, float(n), *stencil_args(table), table.ell)
    beta_t = params.beta * w * math.fsum(D * D)
    alpha_t = params.alpha * w * w * math.fsum(sums[:, 2])
    gamma_t = params.gamma * w * math.fsum((q * q).ravel())
    return {"beta": beta_t, "alpha": alpha_t, "gamma": gamma_t}


def quadratic_energy(state, table, params):
    """``B(z, z)`` with no admissibility check."""
    t = energy_terms(state, table, params)
    return t["beta"] + t["alpha"] + t["gamma"]


def bilinear_B(state1, state2, table, params):
    u1, q1, D1, E1, n, w = _terms(table, params, state1.u, state1.P)
    u2, q2, D2, E2, _, _ = _terms(table, params, state2.u, state2.P)
    cross = _kernels.cell_cross_sums(u1, q1, E1, u2, q2, E2, float(n), *stencil_args(table), table.ell)
    return (params.beta * w * math.fsum(D1 * D2)
            + params.alpha * w * w * math.fsum(cross)
            + params.gamma * w * math.fsum((q1 * q2).ravel()))


def work(u, b, w):
    """``int b.u`` by the midpoint rule."""
    return w * math.fsum((np.asarray(b, dtype=float) * np.asarray(u, dtype=float).reshape(np.shape(b))).ravel())


def _require_admissible(grid, u):
    if not is_admissible(grid, u):
        raise ValueError("displacement is nonzero on the collar")


def energy_F(state, t, table, params, load):
    grid = table.grid
    _require_admissible(grid, _check_u(table, state.u))
    return quadratic_energy(state, table, params) - work(state.u, load(t), grid.w)


def dissipation_H(P1, P0, grid, params):
    """``sigma_y * sum_i |P1_i - P0_i|_F * w``."""
    P1 = np.asarray(P1, dtype=float)
    P0 = np.asarray(P0, dtype=float)
    if P1.shape != P0.shape:
        raise ValueError(f"plastic fields differ in shape: {P1.shape} vs {P0.shape}")
    k = tensors.dev_dim(grid.n)
    if P1.size != grid.n_cells * k:
        raise ValueError(f"plastic field has {P1.size} entries, expected {grid.n_cells * k}")
    d = tensors.frobenius_norm((P1 - P0).reshape(-1, k), grid.n)
    return params.sigma_y * grid.w * math.fsum(d)


def sphere_moment4(n):
    """``avg over S^{n-1} of z_i z_j z_k z_l`` as an (n,n,n,n) array."""
    I = np.eye(n)
    return (np.einsum("ij,kl->ijkl", I, I) + np.einsum("ik,jl->ijkl", I, I)
            + np.einsum("il,jk->ijkl", I, I)) / (n * (n + 2))


def sphere_shear_density(grad, P, alpha):
    """``alpha n avg_z ((grad - P) z.z - div/n)^2`` per cell, by exact sphere moments."""
    n = grad.shape[-1]
    A = grad - P
    t = np.trace(grad, axis1=1, axis2=2) / n
    m4 = np.einsum("iab,icd,abcd->i", A, A, sphere_moment4(n))
    m2 = np.trace(A, axis1=1, axis2=2) / n
    return alpha * n * (m4 - 2.0 * t * m2 + t * t)


def local_energy_density(grad, P, params, form="lame"):
    """Stored energy density of the local model per cell.

    ``grad`` is the full displacement gradient (N, n, n), ``P`` plastic strain
    matrices (N, n, n).  ``form="lame"`` uses ``lam/2 div^2 + mu|sym grad - P|^2``,
    ``form="sphere"`` the equivalent ``beta div^2 + alpha n avg((grad - P)z.z - div/n)^2``;
    both add ``gamma |P|^2``.
    """
    n = grad.shape[-1]
    div = np.trace(grad, axis1=1, axis2=2)
    hard = params.gamma * np.einsum("iab,iab->i", P, P)
    if form == "lame":
        lam, mu = lame_convert(params.alpha, params.beta, n)
        S = 0.5 * (grad + np.swapaxes(grad, 1, 2)) - P
        return 0.5 * lam * div ** 2 + mu * np.einsum("iab,iab->i", S, S) + hard
    if form == "sphere":
        return params.beta * div ** 2 + sphere_shear_density(grad, P, params.alpha) + hard
    raise ValueError(f"unknown form {form!r}")


def local_quadratic(state, grid, params, form="lame"):
    from .local_reference import local_gradient_tensor

    u = np.asarray(state.u, dtype=float).reshape(grid.n_cells, grid.n)
    P = tensors.to_matrix(np.asarray(state.P, dtype=float).reshape(grid.n_cells, -1), grid.n)
    dens = local_energy_density(local_gradient_tensor(u, grid), P, params, form)
    return grid.w * math.fsum(dens)


def local_energy_F0(state, t, grid, params, load, form="lame"):
    u = np.asarray(state.u, dtype=float)
    if u.size != grid.n_cells * grid.n:
        raise ValueError(f"displacement has {u.size} entries, expected {grid.n_cells * grid.n}")
    _require_admissible(grid, u)
    return local_quadratic(state, grid, params, form) - work(u, load(t), grid.w)
