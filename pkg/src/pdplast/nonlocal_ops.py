"""Nonlocal kinematic operators on cell fields.

Displacements are arrays of shape (N, n); plastic strains are arrays of
shape (N, k) in minimal deviatoric coordinates (see :mod:`pdplast.tensors`).
All double integrals use the midpoint rule: pair weight ``w*w``, single
integrals weight ``w``.  The self pair is excluded (principal value).
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels, tensors


@dataclass
class State:
    u: np.ndarray
    P: np.ndarray

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros((grid.n_cells, grid.n)), np.zeros((grid.n_cells, tensors.dev_dim(grid.n))))

    def copy(self):
        return State(self.u.copy(), self.P.copy())

    def __add__(self, other):
        return State(self.u + other.u, self.P + other.P)

    def __sub__(self, other):
        return State(self.u - other.u, self.P - other.P)

    def __mul__(self, s):
        return State(s * self.u, s * self.P)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SeminormReport:
    s_semi: float
    t_semi: float
    l2_u: float
    l2_P: float

    @property
    def s_norm(self):
        return math.hypot(self.l2_u, self.s_semi)

    @property
    def t_norm(self):
        return math.sqrt(self.l2_u ** 2 + self.l2_P ** 2 + self.t_semi ** 2)

    def triangle_gaps(self, n):
        """Slack in ``|u|_S <= |(u,P)|_T + sqrt(n)|P|`` and the reverse bound."""
        r = math.sqrt(n) * self.l2_P
        return self.t_semi + r - self.s_semi, self.s_semi + r - self.t_semi


def stencil_args(table):
    g = table.grid
    return (g.index, table.full_stencil, np.asarray(g.cells, dtype=np.int64), table.offsets,
            table.flat_offsets, table.rho, table.einv)


def _check_u(table, u):
    u = np.ascontiguousarray(u, dtype=float)
    g = table.grid
    if u.size != g.n_cells * g.n:
        raise ValueError(f"displacement has {u.size} entries, expected {g.n_cells * g.n}")
    return u.reshape(g.n_cells, g.n)


def _check_P(table, P):
    P = np.ascontiguousarray(P, dtype=float)
    g = table.grid
    k = tensors.dev_dim(g.n)
    if P.size != g.n_cells * k:
        raise ValueError(f"plastic strain has {P.size} entries, expected {g.n_cells * k}")
    return P.reshape(g.n_cells, k)


def pair_strain(u, i, j, grid):
    """Projected strain ``(u_j - u_i).(x_j - x_i) / |x_j - x_i|^2``."""
    if i == j:
        raise ValueError("pair strain needs two distinct cells")
    u = np.asarray(u, dtype=float).reshape(grid.n_cells, grid.n)
    dx = grid.centers[j] - grid.centers[i]
    return float((u[j] - u[i]) @ dx / (dx @ dx))


def pair_strain_plastic(u, P, i, j, grid):
    """Pair strain minus the bond projection of ``P`` at the first cell."""
    if i == j:
        raise ValueError("pair strain needs two distinct cells")
    P = np.asarray(P, dtype=float).reshape(grid.n_cells, -1)
    dx = grid.centers[j] - grid.centers[i]
    e = dx / np.linalg.norm(dx)
    Pi = tensors.to_matrix(P[i], grid.n)
    return pair_strain(u, i, j, grid) - float(Pi @ e @ e)


def nonlocal_divergence(u, table):
    u = _check_u(table, u)
    return _kernels.divergence(u, *stencil_args(table), table.grid.w)


def plastic_moment(P, table):
    """``sum_j rho_ij w (P_i e_ij).e_ij`` per cell."""
    P = _check_P(table, P)
    q = tensors.to_orthonormal(P, table.grid.n)
    return np.einsum("ik,ik->i", table.moment1, q)


def nonlocal_divergence_plastic(u, P, table):
    """``sum_j rho_ij w E(u,P)_ij``, accumulated pair by pair."""
    u = _check_u(table, u)
    P = _check_P(table, P)
    q = np.ascontiguousarray(tensors.to_orthonormal(P, table.grid.n))
    return _kernels.plastic_divergence(u, q, *stencil_args(table), table.ell, table.grid.w)


def cell_square_sums(u, P, table):
    """Per-cell ``sum_j rho D^2``, ``sum_j rho E^2``, ``sum_j rho (E - Ediv/n)^2``."""
    u = _check_u(table, u)
    P = _check_P(table, P)
    n = table.grid.n
    q = np.ascontiguousarray(tensors.to_orthonormal(P, n))
    Ediv = nonlocal_divergence(u, table) - np.einsum("ik,ik->i", table.moment1, q)
    return _kernels.cell_square_sums(u, q, Ediv, float(n), *stencil_args(table), table.ell)


def seminorms(state, table):
    g = table.grid
    sums = cell_square_sums(state.u, state.P, table)
    w = g.w
    s2 = math.fsum(sums[:, 0]) * w * w
    t2 = math.fsum(sums[:, 1]) * w * w
    u = _check_u(table, state.u)
    P = _check_P(table, state.P)
    l2u = math.fsum((u * u).ravel()) * w
    l2P = math.fsum(tensors.frobenius_norm(P, g.n) ** 2) * w
    return SeminormReport(s_semi=math.sqrt(s2), t_semi=math.sqrt(t2),
                          l2_u=math.sqrt(l2u), l2_P=math.sqrt(l2P))
