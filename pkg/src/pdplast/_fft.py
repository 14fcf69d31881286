"""FFT application of translation-invariant stencil sums.

For per-offset weights ``W_s`` on a grid with zero padding

    corr(X, W)_i = sum_s W_s X_{i+s} [i+s in grid]
    conv(Y, W)_j = sum_s W_s Y_{j-s} [j-s in grid]

Truncation at the grid boundary is handled exactly by the padding; the
self terms use per-cell sums of ``W`` over the offsets that stay inside.
"""
import numpy as np
import scipy.fft


class StencilFFT:
    def __init__(self, table):
        grid = table.grid
        self.cells = tuple(grid.cells)
        reach = np.abs(table.offsets).max(axis=0)
        self.shape = tuple(scipy.fft.next_fast_len(int(c + r), real=True)
                           for c, r in zip(self.cells, reach))
        self.axes = tuple(range(grid.n))
        self._pos = tuple(np.mod(table.offsets[:, a], self.shape[a]) for a in range(grid.n))
        self._neg = tuple(np.mod(-table.offsets[:, a], self.shape[a]) for a in range(grid.n))
        self.valid_fwd = table.valid.T.astype(float)        # [i+s in grid]
        # [j-s in grid] is the valid mask of the mirrored offset
        self.valid_bwd = self._mirror_valid(table)

    def _mirror_valid(self, table):
        idx = table.grid.index
        cells = np.asarray(table.grid.cells)
        tgt = idx[None, :, :] - table.offsets[:, None, :]
        return np.all((tgt >= 0) & (tgt < cells), axis=2).T.astype(float)

    def stencil_hat(self, W, kind):
        """Transforms of weights ``W`` (S, m): ``kind`` is 'corr' or 'conv'."""
        W = np.asarray(W, dtype=float)
        out = np.zeros((W.shape[1],) + self.shape)
        pos = self._neg if kind == "corr" else self._pos
        for c in range(W.shape[1]):
            np.add.at(out[c], pos, W[:, c])
        return scipy.fft.rfftn(out, s=self.shape, axes=tuple(a + 1 for a in self.axes))

    def forward(self, X):
        """(N, m) cell field -> (m, spectrum)."""
        X = np.asarray(X, dtype=float)
        m = X.shape[1]
        grid = X.T.reshape((m,) + self.cells)
        return scipy.fft.rfftn(grid, s=self.shape, axes=tuple(a + 1 for a in self.axes))

    def inverse(self, Z):
        """(m, spectrum) -> (N, m) cell field."""
        Z = np.atleast_1d(Z)
        full = scipy.fft.irfftn(Z, s=self.shape, axes=tuple(a + 1 for a in self.axes))
        sl = (slice(None),) + tuple(slice(0, c) for c in self.cells)
        return full[sl].reshape(full.shape[0], -1).T
