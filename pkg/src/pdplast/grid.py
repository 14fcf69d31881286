"""Uniform cell grids with a Dirichlet collar."""
from dataclasses import dataclass, field
import math

import numpy as np


@dataclass(frozen=True)
class Collar:
    """Constrained region made of whole cells.

    ``kind="frame"`` marks every cell within ``width`` cells of the boundary;
    ``kind="side"`` marks a strip of ``width`` cells on one face
    (``axis``, ``side`` in {"min", "max"}).
    """
    kind: str = "frame"
    width: int = 1
    axis: int = 0
    side: str = "min"

    def __post_init__(self):
        if self.kind not in ("frame", "side"):
            raise ValueError(f"unknown collar kind {self.kind!r}")
        if int(self.width) < 1:
            raise ValueError("collar width must be >= 1 cell")
        if self.side not in ("min", "max"):
            raise ValueError(f"collar side must be 'min' or 'max', got {self.side!r}")

    @classmethod
    def frame(cls, width):
        return cls("frame", int(width))

    @classmethod
    def strip(cls, axis, width, side="min"):
        return cls("side", int(width), int(axis), side)


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    cells: tuple
    extent: tuple
    collar: Collar
    h: np.ndarray = field(repr=False)
    w: float = field(repr=False)
    centers: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)
    collar_mask: np.ndarray = field(repr=False)
    free_index: np.ndarray = field(repr=False)
    free_cells: np.ndarray = field(repr=False)

    @property
    def n_cells(self):
        return self.centers.shape[0]

    @property
    def n_free(self):
        return self.free_cells.size

    @property
    def strides(self):
        s = np.ones(self.n, dtype=np.int64)
        for a in range(self.n - 2, -1, -1):
            s[a] = s[a + 1] * self.cells[a + 1]
        return s

    def free_dofs(self):
        """Flat indices of free displacement components (cell-major, n per cell)."""
        return (self.free_cells[:, None] * self.n + np.arange(self.n)).ravel()

    def reshape(self, field_):
        """View a per-cell array as grid-shaped (cells..., extra...)."""
        field_ = np.asarray(field_)
        return field_.reshape(tuple(self.cells) + field_.shape[1:])

    def interior_mask(self, margin):
        """Cells whose center is at distance >= margin from the boundary of the box."""
        lo = self.centers
        hi = np.asarray(self.extent) - self.centers
        return np.all((lo >= margin - 1e-12) & (hi >= margin - 1e-12), axis=1)


def build_grid(n, cells, extent, collar):
    """Uniform cell-centred grid on ``prod [0, extent_a]`` with collar ``collar``."""
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    cells = tuple(int(c) for c in cells)
    extent = tuple(float(x) for x in extent)
    if len(cells) != n or len(extent) != n:
        raise ValueError("cells and extent must have one entry per axis")
    if min(cells) < 4:
        raise ValueError("need at least 4 cells per axis")
    if min(extent) <= 0.0:
        raise ValueError("extent must be positive on every axis")
    if not isinstance(collar, Collar):
        collar = Collar(**collar)

    h = np.array(extent) / np.array(cells)
    w = float(np.prod(h))
    index = np.stack(np.meshgrid(*[np.arange(c) for c in cells], indexing="ij"), axis=-1)
    index = index.reshape(-1, n).astype(np.int64)
    centers = (index + 0.5) * h

    k = collar.width
    if collar.kind == "frame":
        mask = np.zeros(len(index), dtype=bool)
        for a in range(n):
            mask |= (index[:, a] < k) | (index[:, a] >= cells[a] - k)
    else:
        if not 0 <= collar.axis < n:
            raise ValueError(f"collar axis {collar.axis} out of range")
        col = index[:, collar.axis]
        mask = col < k if collar.side == "min" else col >= cells[collar.axis] - k
    if mask.all():
        raise ValueError("collar covers every cell")

    free_cells = np.flatnonzero(~mask)
    free_index = np.full(len(index), -1, dtype=np.int64)
    free_index[free_cells] = np.arange(free_cells.size)
    for arr in (h, index, centers, mask, free_index, free_cells):
        arr.setflags(write=False)
    return Grid(n=n, cells=cells, extent=extent, collar=collar, h=h, w=w,
                centers=centers, index=index, collar_mask=mask,
                free_index=free_index, free_cells=free_cells)


def apply_constraint(grid, u):
    """Zero the displacement on collar cells.  Accepts (N, n) or flat (N*n,)."""
    u = np.asarray(u, dtype=float)
    flat = u.ndim == 1
    if u.size != grid.n_cells * grid.n:
        raise ValueError(f"field has {u.size} entries, expected {grid.n_cells * grid.n}")
    out = u.reshape(grid.n_cells, grid.n).copy()
    out[grid.collar_mask] = 0.0
    return out.ravel() if flat else out


def is_admissible(grid, u, atol=0.0):
    u = np.asarray(u, dtype=float).reshape(grid.n_cells, grid.n)
    return bool(np.all(np.abs(u[grid.collar_mask]) <= atol))


def collar_width_for(delta, h):
    """Smallest whole-cell collar width resolving a horizon ``delta``."""
    return int(math.ceil(delta / float(np.min(h)) - 1e-12))
