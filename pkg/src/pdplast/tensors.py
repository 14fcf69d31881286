"""Coordinates for symmetric trace-free (deviatoric) tensors.

Plastic strains are stored in *minimal* coordinates:

* n = 2: ``(p11, p12)`` with ``p22 = -p11``
* n = 3: ``(p11, p22, p12, p13, p23)`` with ``p33 = -p11 - p22``

Minimal coordinates are not orthonormal for the Frobenius product
(``|diag(a, -a)|^2 = 2 a^2``).  The solvers work in *orthonormal*
coordinates ``q = L^T c`` where ``G = L L^T`` is the Gram matrix of the
basis, so that ``|P|_F = |q|``.
"""
from functools import lru_cache

import numpy as np


def dev_dim(n):
    """Dimension of the symmetric deviatoric space in R^{n x n}."""
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    return n * (n + 1) // 2 - 1


@lru_cache(maxsize=None)
def _basis(n):
    k = dev_dim(n)
    E = np.zeros((k, n, n))
    if n == 2:
        E[0] = [[1.0, 0.0], [0.0, -1.0]]
        E[1] = [[0.0, 1.0], [1.0, 0.0]]
    else:
        E[0] = np.diag([1.0, 0.0, -1.0])
        E[1] = np.diag([0.0, 1.0, -1.0])
        for m, (a, b) in enumerate([(0, 1), (0, 2), (1, 2)], start=2):
            E[m, a, b] = E[m, b, a] = 1.0
    E.setflags(write=False)
    return E


def basis(n):
    """Basis matrices ``E_k`` with ``P = sum_k c_k E_k``; shape (k, n, n)."""
    return _basis(n)


@lru_cache(maxsize=None)
def _gram_factor(n):
    E = _basis(n)
    G = np.einsum("kab,lab->kl", E, E)
    L = np.linalg.cholesky(G)
    for arr in (G, L):
        arr.setflags(write=False)
    return G, L


def gram(n):
    """Frobenius Gram matrix of the minimal basis."""
    return _gram_factor(n)[0]


def to_matrix(c, n):
    """Minimal coordinates (..., k) -> matrices (..., n, n)."""
    c = np.asarray(c, dtype=float)
    return np.einsum("...k,kab->...ab", c, _basis(n))


def from_matrix(P, n):
    """Deviatoric part of symmetric matrices (..., n, n) -> minimal coords.

    The trace is removed and the matrix symmetrised first, so the map is the
    orthogonal projection onto the deviatoric space followed by the
    coordinate read-out.
    """
    P = np.asarray(P, dtype=float)
    S = 0.5 * (P + np.swapaxes(P, -1, -2))
    S = S - np.trace(S, axis1=-2, axis2=-1)[..., None, None] * np.eye(n) / n
    if n == 2:
        return np.stack([S[..., 0, 0], S[..., 0, 1]], axis=-1)
    return np.stack([S[..., 0, 0], S[..., 1, 1], S[..., 0, 1], S[..., 0, 2], S[..., 1, 2]], axis=-1)


def to_orthonormal(c, n):
    """Minimal coords -> orthonormal coords (``|P|_F = |q|``)."""
    L = _gram_factor(n)[1]
    return np.asarray(c, dtype=float) @ L


def from_orthonormal(q, n):
    L = _gram_factor(n)[1]
    return np.linalg.solve(L.T, np.asarray(q, dtype=float).T).T if np.ndim(q) > 1 \
        else np.linalg.solve(L.T, np.asarray(q, dtype=float))


def frobenius_norm(c, n):
    """``|P|_F`` for minimal coordinates (..., k)."""
    c = np.asarray(c, dtype=float)
    G = _gram_factor(n)[0]
    return np.sqrt(np.einsum("...k,kl,...l->...", c, G, c))


def bond_projection(e, n):
    """Coefficients ``l_k = (E_k e) . e`` so that ``(P e).e = l . c``.

    ``e`` has shape (..., n); the result has shape (..., k).
    """
    e = np.asarray(e, dtype=float)
    return np.einsum("kab,...a,...b->...k", _basis(n), e, e)
