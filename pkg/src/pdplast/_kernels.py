# Compiled loops over (cell, stencil offset) pairs.
#
# Shared argument convention:
#   idx (N, n) int64 cell multi-indices, full (N,) bool cells seeing the whole
#   stencil, cells (n,) int64 grid shape,
#   off (S, n) int64 stencil offsets, foff (S,) flat offsets,
#   rho (S,) kernel values, einv (S, n) = e / d, ell (S, k) bond projections
#   in orthonormal deviatoric coordinates, w cell volume.
import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _inside(idx, full, cells, off, i, s):
    if full[i]:
        return True
    for a in range(idx.shape[1]):
        t = idx[i, a] + off[s, a]
        if t < 0 or t >= cells[a]:
            return False
    return True


@numba.njit(cache=True, inline="always")
def _strain(u, i, j, einv, s):
    acc = 0.0
    for a in range(u.shape[1]):
        acc += (u[j, a] - u[i, a]) * einv[s, a]
    return acc


@numba.njit(cache=True)
def divergence(u, idx, full, cells, off, foff, rho, einv, w):
    N = u.shape[0]
    out = np.zeros(N)
    for i in range(N):
        acc = 0.0
        for s in range(off.shape[0]):
            if _inside(idx, full, cells, off, i, s):
                acc += rho[s] * _strain(u, i, i + foff[s], einv, s)
        out[i] = acc * w
    return out


@numba.njit(cache=True)
def plastic_divergence(u, q, idx, full, cells, off, foff, rho, einv, ell, w):
    N = u.shape[0]
    k = ell.shape[1]
    out = np.zeros(N)
    for i in range(N):
        acc = 0.0
        for s in range(off.shape[0]):
            if _inside(idx, full, cells, off, i, s):
                proj = 0.0
                for m in range(k):
                    proj += ell[s, m] * q[i, m]
                acc += rho[s] * (_strain(u, i, i + foff[s], einv, s) - proj)
        out[i] = acc * w
    return out


@numba.njit(cache=True)
def strain_and_projection(u, idx, full, cells, off, foff, rho, einv, ell, w):
    """Per cell: divergence and ``sum_j rho D_ij ell_ij``."""
    N = u.shape[0]
    k = ell.shape[1]
    div = np.zeros(N)
    dl = np.zeros((N, k))
    for i in range(N):
        acc = 0.0
        for s in range(off.shape[0]):
            if _inside(idx, full, cells, off, i, s):
                dv = rho[s] * _strain(u, i, i + foff[s], einv, s)
                acc += dv
                for m in range(k):
                    dl[i, m] += dv * ell[s, m]
        div[i] = acc * w
    return div, dl


@numba.njit(cache=True)
def cell_square_sums(u, q, Ediv, n, idx, full, cells, off, foff, rho, einv, ell):
    """Per cell sums of rho*D^2, rho*E^2 and rho*(E - Ediv_i/n)^2.

    Uses Kahan compensation; the pair terms are nonnegative and the
    sums feed seminorm comparisons across horizons.
    """
    N = u.shape[0]
    k = ell.shape[1]
    out = np.zeros((N, 3))
    for i in range(N):
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        shift = Ediv[i] / n
        for s in range(off.shape[0]):
            if not _inside(idx, full, cells, off, i, s):
                continue
            D = _strain(u, i, i + foff[s], einv, s)
            proj = 0.0
            for m in range(k):
                proj += ell[s, m] * q[i, m]
            E = D - proj
            C = E - shift
            y = rho[s] * D * D - c0
            t = s0 + y
            c0 = (t - s0) - y
            s0 = t
            y = rho[s] * E * E - c1
            t = s1 + y
            c1 = (t - s1) - y
            s1 = t
            y = rho[s] * C * C - c2
            t = s2 + y
            c2 = (t - s2) - y
            s2 = t
        out[i, 0] = s0
        out[i, 1] = s1
        out[i, 2] = s2
    return out


@numba.njit(cache=True)
def cell_cross_sums(u1, q1, E1, u2, q2, E2, n, idx, full, cells, off, foff, rho, einv, ell):
    """Per cell ``sum_j rho (E1 - E1div/n)(E2 - E2div/n)``."""
    N = u1.shape[0]
    k = ell.shape[1]
    out = np.zeros(N)
    for i in range(N):
        acc = 0.0
        for s in range(off.shape[0]):
            if not _inside(idx, full, cells, off, i, s):
                continue
            j = i + foff[s]
            p1 = 0.0
            p2 = 0.0
            for m in range(k):
                p1 += ell[s, m] * q1[i, m]
                p2 += ell[s, m] * q2[i, m]
            c1 = _strain(u1, i, j, einv, s) - p1 - E1[i] / n
            c2 = _strain(u2, i, j, einv, s) - p2 - E2[i] / n
            acc += rho[s] * c1 * c2
        out[i] = acc
    return out


@numba.njit(cache=True)
def quadratic_gradient(u, q, Ddiv, Ediv, mass, active, alpha, beta, n,
                       idx, full, cells, off, foff, rho, einv, ell, w):
    """Gradient of the alpha- and beta-terms of the energy.

    Only cells listed in ``active`` are visited as the first point of a
    pair, which is exact whenever every other cell contributes zero
    (e.g. u = 0 and q = 0 outside ``active``).
    """
    N = u.shape[0]
    nd = u.shape[1]
    k = ell.shape[1]
    gu = np.zeros((N, nd))
    gq = np.zeros((N, k))
    w2 = w * w
    for t in range(active.shape[0]):
        i = active[t]
        shift = Ediv[i] / n
        Ci = (Ediv[i] / w) * (1.0 - mass[i] / n)
        bterm = 2.0 * beta * w2 * Ddiv[i]
        for s in range(off.shape[0]):
            if not _inside(idx, full, cells, off, i, s):
                continue
            j = i + foff[s]
            D = _strain(u, i, j, einv, s)
            proj = 0.0
            for m in range(k):
                proj += ell[s, m] * q[i, m]
            c = D - proj - shift
            tau = 2.0 * alpha * w2 * rho[s] * (c - (w / n) * Ci)
            phi = tau + bterm * rho[s]
            for a in range(nd):
                f = phi * einv[s, a]
                gu[j, a] += f
                gu[i, a] -= f
            for m in range(k):
                gq[i, m] -= tau * ell[s, m]
    return gu, gq


@numba.njit(cache=True)
def divergence_rows(free_index, nfree_dofs, idx, full, cells, off, foff, rho, einv, w):
    """Dense matrix B with ``Ddiv = B @ u_free`` (rows: all cells)."""
    N = idx.shape[0]
    nd = idx.shape[1]
    B = np.zeros((N, nfree_dofs))
    for i in range(N):
        fi = free_index[i]
        for s in range(off.shape[0]):
            if not _inside(idx, full, cells, off, i, s):
                continue
            j = i + foff[s]
            fj = free_index[j]
            for a in range(nd):
                v = rho[s] * w * einv[s, a]
                if fj >= 0:
                    B[i, fj * nd + a] += v
                if fi >= 0:
                    B[i, fi * nd + a] -= v
    return B


@numba.njit(cache=True)
def pair_gram(free_index, nfree_dofs, idx, full, cells, off, foff, rho, einv, coef):
    """Dense ``sum_pairs coef*rho * a a^T`` with ``a.u = D_ij(u)`` on free dofs."""
    N = idx.shape[0]
    nd = idx.shape[1]
    K = np.zeros((nfree_dofs, nfree_dofs))
    for i in range(N):
        fi = free_index[i]
        for s in range(off.shape[0]):
            if not _inside(idx, full, cells, off, i, s):
                continue
            j = i + foff[s]
            fj = free_index[j]
            if fi < 0 and fj < 0:
                continue
            r = coef * rho[s]
            for a in range(nd):
                for b in range(nd):
                    v = r * einv[s, a] * einv[s, b]
                    if fj >= 0:
                        K[fj * nd + a, fj * nd + b] += v
                    if fi >= 0:
                        K[fi * nd + a, fi * nd + b] += v
                    if fi >= 0 and fj >= 0:
                        K[fi * nd + a, fj * nd + b] -= v
                        K[fj * nd + a, fi * nd + b] -= v
    return K


@numba.njit(cache=True)
def hessian_diagonal(free_index, nfree_dofs, cellcoef, paircoef,
                     idx, full, cells, off, foff, rho, einv, w):
    """Exact diagonal of ``paircoef*sum rho a a^T + sum_i cellcoef_i b_i b_i^T``."""
    N = idx.shape[0]
    nd = idx.shape[1]
    diag = np.zeros(nfree_dofs)
    self_row = np.zeros(nd)
    for i in range(N):
        fi = free_index[i]
        for a in range(nd):
            self_row[a] = 0.0
        for s in range(off.shape[0]):
            if not _inside(idx, full, cells, off, i, s):
                continue
            j = i + foff[s]
            fj = free_index[j]
            for a in range(nd):
                ea = einv[s, a]
                p = paircoef * rho[s] * ea * ea
                if fj >= 0:
                    diag[fj * nd + a] += p + cellcoef[i] * (rho[s] * w * ea) ** 2
                if fi >= 0:
                    diag[fi * nd + a] += p
                self_row[a] -= rho[s] * w * ea
        if fi >= 0:
            for a in range(nd):
                diag[fi * nd + a] += cellcoef[i] * self_row[a] ** 2
    return diag
