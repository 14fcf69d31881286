"""Radial kernel families and the neighbour stencil built from them."""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from . import tensors

FAMILIES = ("constant", "quadratic", "inverse")


def sphere_area(n):
    """Surface measure of the unit sphere S^{n-1}."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _radial_moment(family, n, a, b):
    """int_a^b g(r) r^{n-1} dr for the family profile g."""
    if family == "constant":
        p = n
    elif family == "quadratic":
        p = n + 2
    elif family == "inverse":
        p = n - 1
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    return (b ** p - a ** p) / p


@dataclass(frozen=True)
class Kernel:
    """``rho(x) = c * g(|x|) * 1{|x| < delta}`` with ``g in {1, r^2, 1/r}``."""
    family: str
    delta: float
    n: int
    c: float

    def profile(self, r):
        """Radial profile ``rho_bar(r)``; zero at r = 0 for the singular family."""
        r = np.asarray(r, dtype=float)
        inside = (r < self.delta) & (r > 0)
        if self.family == "constant":
            g = np.ones_like(r)
        elif self.family == "quadratic":
            g = r ** 2
        else:
            with np.errstate(divide="ignore"):
                g = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
        return np.where(inside, self.c * g, 0.0)

    def scaled_profile(self, r):
        """``r^{-2} rho_bar(r)``, which must be non-increasing."""
        r = np.asarray(r, dtype=float)
        return self.profile(r) / r ** 2

    def __call__(self, x):
        return self.profile(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))


def make_kernel(family, delta, n):
    if family not in FAMILIES:
        raise ValueError(f"unknown kernel family {family!r}; choose from {FAMILIES}")
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    if not delta > 0:
        raise ValueError("horizon delta must be positive")
    c = n / (sphere_area(n) * _radial_moment(family, n, 0.0, float(delta)))
    return Kernel(family=family, delta=float(delta), n=n, c=c)


def kernel_tail_mass(kernel, r):
    """Mass of the kernel outside the ball B(0, r), in closed form."""
    if not r > 0:
        raise ValueError("radius must be positive")
    if r >= kernel.delta:
        return 0.0
    return kernel.c * sphere_area(kernel.n) * _radial_moment(kernel.family, kernel.n, r, kernel.delta)


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Translation-invariant stencil of a kernel on a uniform grid.

    Neighbour ``s`` of cell ``i`` is the cell at index offset ``offsets[s]``
    when it lies inside the grid.  Every per-pair quantity (kernel value,
    direction, distance) depends on the offset only, so it is stored once
    per offset.  ``pairs()`` materialises the directed pair list.
    """
    grid: object
    kernel: Kernel
    mode: str
    scale: float
    offsets: np.ndarray
    flat_offsets: np.ndarray
    rho: np.ndarray
    e: np.ndarray
    d: np.ndarray
    valid: np.ndarray = field(repr=False)

    @property
    def n_offsets(self):
        return self.offsets.shape[0]

    @cached_property
    def einv(self):
        """Bond direction divided by bond length, so D = (u_j - u_i) . einv."""
        return np.ascontiguousarray(self.e / self.d[:, None])

    @cached_property
    def ell(self):
        """Bond projections ``(E_k e).e`` in orthonormal deviatoric coordinates."""
        n = self.grid.n
        lmin = tensors.bond_projection(self.e, n)
        L = tensors._gram_factor(n)[1]
        # l . c = l . L^{-T} q
        return np.ascontiguousarray(np.linalg.solve(L, lmin.T).T)

    @cached_property
    def mass(self):
        """Discrete kernel mass ``m_i = sum_j rho_ij w`` per cell."""
        return self.valid.T.astype(float) @ self.rho * self.grid.w

    @cached_property
    def moment1(self):
        """``lambda_i = sum_j rho_ij w ell_ij`` (orthonormal coords), shape (N, k)."""
        return self.valid.T.astype(float) @ (self.rho[:, None] * self.ell) * self.grid.w

    @cached_property
    def moment2(self):
        """``sum_j rho_ij ell_ij ell_ij^T`` (no volume factor), shape (N, k, k)."""
        k = self.ell.shape[1]
        outer = np.einsum("s,sa,sb->sab", self.rho, self.ell, self.ell).reshape(-1, k * k)
        return (self.valid.T.astype(float) @ outer).reshape(-1, k, k)

    @cached_property
    def full_stencil(self):
        """Cells that see every stencil offset (no boundary truncation)."""
        return self.valid.all(axis=0)

    def neighbors(self, i):
        """Entries ``(j, rho, e, d)`` of cell ``i``."""
        s = np.flatnonzero(self.valid[:, i])
        j = i + self.flat_offsets[s]
        return j, self.rho[s], self.e[s], self.d[s]

    def pairs(self):
        """Directed pairs as arrays ``(i, j, s)`` ordered by ``i``."""
        s_idx, i_idx = np.nonzero(self.valid)
        order = np.lexsort((s_idx, i_idx))
        i_idx, s_idx = i_idx[order], s_idx[order]
        return i_idx, i_idx + self.flat_offsets[s_idx], s_idx


def build_neighbor_table(grid, kernel, mode="stencil"):
    if mode not in ("stencil", "analytic"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    if kernel.n != grid.n:
        raise ValueError("kernel and grid dimensions differ")
    h = grid.h
    if kernel.delta < 1.5 * float(np.max(h)):
        raise ValueError(f"horizon {kernel.delta} too small for spacing {np.max(h)}: "
                         "need delta >= 1.5 h for a neighbour ring")
    reach = [int(math.ceil(kernel.delta / ha)) for ha in h]
    axes = [np.arange(-r, r + 1) for r in reach]
    offs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.n)
    vec = offs * h
    if np.all(h == h[0]):
        # integer squared lengths keep equal distances bit-identical
        dist = h[0] * np.sqrt((offs ** 2).sum(axis=1).astype(float))
    else:
        dist = np.linalg.norm(vec, axis=1)
    keep = (dist > 0) & (dist < kernel.delta)
    if not keep.any():
        raise ValueError("no neighbours inside the horizon")
    offs, vec, dist = offs[keep], vec[keep], dist[keep]
    rho = kernel.profile(dist)
    scale = 1.0
    if mode == "stencil":
        scale = grid.n / (rho.sum() * grid.w)
        rho = rho * scale
    e = vec / dist[:, None]
    flat = offs @ grid.strides

    idx = grid.index
    cells = np.asarray(grid.cells)
    tgt = idx[None, :, :] + offs[:, None, :]
    valid = np.all((tgt >= 0) & (tgt < cells), axis=2)

    arrays = (offs, flat, rho, e, dist, valid)
    for arr in arrays:
        arr.setflags(write=False)
    return NeighborTable(grid=grid, kernel=kernel, mode=mode, scale=float(scale),
                         offsets=offs.astype(np.int64), flat_offsets=flat.astype(np.int64),
                         rho=rho, e=e, d=dist, valid=valid)
