"""Local (classical) elastoplastic reference model on the same cell grid.

Stored energy per cell

    lam/2 (div u)^2 + mu |sym grad u - P|^2 + gamma |P|^2

with finite-difference gradients: central differences in the interior and
one-sided differences in the outermost cell layer.
"""
from functools import lru_cache
import math
import weakref

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tensors
from .energy import lame_convert
from .solver import SolverError


def gradient_operator(grid):
    """Sparse ``G`` with ``(G u)[(i*n + a)*n + b] = d u_a / d x_b`` at cell i."""
    return _gradient_operator(grid)


_GRAD = weakref.WeakKeyDictionary()


def _gradient_operator(grid):
    if grid in _GRAD:
        return _GRAD[grid]
    n, N = grid.n, grid.n_cells
    idx = grid.index
    strides = grid.strides
    rows, cols, vals = [], [], []
    cells = np.arange(N)
    for b in range(n):
        c = idx[:, b]
        last = grid.cells[b] - 1
        hb = grid.h[b]
        up = np.where(c < last, cells + strides[b], cells)
        dn = np.where(c > 0, cells - strides[b], cells)
        span = np.where((c > 0) & (c < last), 2.0, 1.0) * hb
        for a in range(n):
            r = (cells * n + a) * n + b
            rows += [r, r]
            cols += [up * n + a, dn * n + a]
            vals += [1.0 / span, -1.0 / span]
    G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N * n * n, N * n))
    G.sum_duplicates()
    _GRAD[grid] = G
    return G


@lru_cache(maxsize=None)
def _sym_perm(n):
    return np.arange(n * n).reshape(n, n).T.ravel()


def _sym_div_ops(grid):
    n, N = grid.n, grid.n_cells
    G = gradient_operator(grid)
    perm = (np.arange(N)[:, None] * n * n + _sym_perm(n)[None, :]).ravel()
    Gs = 0.5 * (G + G[perm])
    diag_rows = (np.arange(N)[:, None] * n * n + np.arange(n) * (n + 1)).ravel()
    Dv = sp.csr_matrix((np.ones(N * n), (np.repeat(np.arange(N), n), diag_rows)), shape=(N, N * n * n)) @ G
    return Gs.tocsr(), Dv.tocsr()


def local_gradient_tensor(u, grid):
    u = np.asarray(u, dtype=float)
    if u.size != grid.n_cells * grid.n:
        raise ValueError(f"displacement has {u.size} entries, expected {grid.n_cells * grid.n}")
    return (gradient_operator(grid) @ u.ravel()).reshape(grid.n_cells, grid.n, grid.n)


def local_gradients(u, grid):
    """Finite-difference ``(sym grad u, div u)`` per cell."""
    g = local_gradient_tensor(u, grid)
    return 0.5 * (g + np.swapaxes(g, 1, 2)), np.trace(g, axis1=1, axis2=2)


def stress(u, P, grid, params):
    """Cauchy stress ``lam tr(E) I + 2 mu E`` with ``E = sym grad u - P``."""
    lam, mu = lame_convert(params.alpha, params.beta, grid.n)
    S, div = local_gradients(u, grid)
    E = S - tensors.to_matrix(np.asarray(P, dtype=float).reshape(grid.n_cells, -1), grid.n)
    return lam * div[:, None, None] * np.eye(grid.n) + 2.0 * mu * E


def flow_rule_defect(u, P, P_old, grid, params):
    """``|dev stress - 2 gamma P|`` per cell and the mask of cells with ``P != P_old``."""
    Sig = stress(u, P, grid, params)
    Pm = tensors.to_matrix(np.asarray(P).reshape(grid.n_cells, -1), grid.n)
    dev = Sig - np.trace(Sig, axis1=1, axis2=2)[:, None, None] * np.eye(grid.n) / grid.n
    drive = np.linalg.norm((dev - 2.0 * params.gamma * Pm).reshape(grid.n_cells, -1), axis=1)
    flowing = np.any(np.asarray(P) != np.asarray(P_old), axis=1)
    return drive, flowing


class LocalModel:
    """Quadratic pieces of the local energy, for :func:`pdplast.solver.bcd`."""

    M = None
    direct = True

    def __init__(self, grid, params):
        if params.n != grid.n:
            raise ValueError("material and grid dimensions differ")
        self.grid = grid
        self.params = params
        self.n = grid.n
        self.k = tensors.dev_dim(grid.n)
        self.w = grid.w
        self.free = grid.free_dofs()
        self.s = params.sigma_y * grid.w
        self.lam, self.mu = lame_convert(params.alpha, params.beta, grid.n)
        self.isotropic = 2.0 * (self.mu + params.gamma) * self.w
        self.Gs, self.Dv = _sym_div_ops(grid)
        H = self.w * (self.lam * (self.Dv.T @ self.Dv) + 2.0 * self.mu * (self.Gs.T @ self.Gs))
        self.H = H.tocsr()[self.free][:, self.free].tocsc()
        self._lu = None

    def grad_q(self, u, q):
        S = (self.Gs @ u.ravel()).reshape(-1, self.n, self.n)
        qS = tensors.to_orthonormal(tensors.from_matrix(S, self.n), self.n)
        return self.w * (-2.0 * self.mu * qS) + self.isotropic * q

    def r_from_q(self, q, active=None):
        P = tensors.to_matrix(tensors.from_orthonormal(q, self.n), self.n)
        return (-2.0 * self.mu * self.w * (self.Gs.T @ P.ravel())).reshape(-1, self.n)

    def H_free(self, x):
        return self.H @ x

    def solve_u(self, rhs, cfg, x0=None):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.H)
            except RuntimeError as exc:
                raise SolverError("local displacement Hessian is singular") from exc
        return self._lu.solve(rhs)

    def quad_q(self, q):
        return 0.5 * self.isotropic * math.fsum((q * q).ravel())


_LOCAL = weakref.WeakKeyDictionary()


def get_local_model(grid, params):
    per = _LOCAL.setdefault(grid, {})
    if params not in per:
        per[params] = LocalModel(grid, params)
    return per[params]


def run_local_quasistatic(initial_P, load, N, grid, params, cfg=None, warm_start=True):
    from .quasistatic import march
    from .solver import SolverConfig

    cfg = cfg or SolverConfig()
    return march(get_local_model(grid, params), initial_P, load, N, cfg, warm_start)
