import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pdplast import Collar, apply_constraint, build_grid, is_admissible, tensors
from pdplast.grid import collar_width_for

from conftest import rng


def test_frame_collar_counts():
    g = build_grid(2, (8, 8), (1, 1), Collar.frame(1))
    assert g.n_cells == 64
    assert g.collar_mask.sum() == 28
    assert g.n_free == 36
    assert g.w == pytest.approx(1 / 64)


def test_side_collar_counts():
    g = build_grid(2, (4, 4), (2, 2), Collar.strip(0, 1, "min"))
    assert g.n_cells == 16
    assert g.collar_mask.sum() == 4
    assert g.w == pytest.approx(0.25)
    assert np.all(g.index[g.collar_mask, 0] == 0)


def test_collar_covering_everything_is_rejected():
    with pytest.raises(ValueError, match="every cell"):
        build_grid(2, (4, 4), (1, 1), Collar.frame(2))


@pytest.mark.parametrize("bad", [dict(n=4), dict(cells=(3, 8)), dict(extent=(0.0, 1.0)),
                                 dict(cells=(8, 8, 8))])
def test_invalid_grids(bad):
    kw = dict(n=2, cells=(8, 8), extent=(1.0, 1.0), collar=Collar.frame(1))
    kw.update(bad)
    with pytest.raises(ValueError):
        build_grid(**kw)


def test_constraint_on_ones():
    g = build_grid(2, (8, 8), (1, 1), Collar.frame(1))
    u = apply_constraint(g, np.ones((64, 2)))
    assert np.all(u[g.collar_mask] == 0) and np.all(u[~g.collar_mask] == 1)
    assert np.all(apply_constraint(g, np.zeros((64, 2))) == 0)
    assert is_admissible(g, u) and not is_admissible(g, np.ones((64, 2)))


def test_constraint_is_idempotent():
    g = build_grid(3, (5, 6, 7), (1, 1, 2), Collar.frame(1))
    u = rng(1).standard_normal((g.n_cells, 3))
    once = apply_constraint(g, u)
    assert np.array_equal(apply_constraint(g, once), once)
    flat = apply_constraint(g, u.ravel())
    assert flat.shape == (g.n_cells * 3,) and np.array_equal(flat, once.ravel())


def test_constraint_rejects_wrong_size():
    g = build_grid(2, (8, 8), (1, 1), Collar.frame(1))
    with pytest.raises(ValueError):
        apply_constraint(g, np.zeros(10))


def test_collar_width_for():
    assert collar_width_for(0.2, np.array([1 / 64, 1 / 64])) == 13
    assert collar_width_for(0.25, np.array([0.125])) == 2


@pytest.mark.parametrize("n", [2, 3])
def test_basis_is_deviatoric_and_gram_is_frobenius(n):
    E = tensors.basis(n)
    assert E.shape == (tensors.dev_dim(n), n, n)
    assert np.allclose(np.trace(E, axis1=1, axis2=2), 0)
    assert np.allclose(E, np.swapaxes(E, 1, 2))
    G = tensors.gram(n)
    assert np.allclose(G, np.einsum("kab,lab->kl", E, E))


@pytest.mark.parametrize("n", [2, 3])
@given(data=st.data())
def test_coordinate_round_trips(n, data):
    k = tensors.dev_dim(n)
    c = data.draw(arrays(float, (4, k), elements=st.floats(-1e3, 1e3)))
    P = tensors.to_matrix(c, n)
    assert np.allclose(tensors.from_matrix(P, n), c, atol=1e-9)
    q = tensors.to_orthonormal(c, n)
    assert np.allclose(np.linalg.norm(q, axis=1), np.linalg.norm(P.reshape(4, -1), axis=1),
                       rtol=1e-12, atol=1e-9)
    assert np.allclose(tensors.from_orthonormal(q, n), c, atol=1e-9)
    assert np.allclose(tensors.frobenius_norm(c, n), np.linalg.norm(q, axis=1), atol=1e-9)


def test_bond_projection_examples():
    # (P e).e for P = diag(p, -p), e = x-axis is p; for e on the diagonal only the shear part counts
    assert np.allclose(tensors.bond_projection(np.array([1.0, 0.0]), 2), [1.0, 0.0])
    e = np.array([1.0, 1.0]) / np.sqrt(2)
    assert np.allclose(tensors.bond_projection(e, 2), [0.0, 1.0])


def test_from_matrix_removes_trace_and_skew():
    A = np.array([[3.0, 1.0], [5.0, 1.0]])
    c = tensors.from_matrix(A, 2)
    assert np.allclose(tensors.to_matrix(c, 2), [[1.0, 3.0], [3.0, -1.0]])
