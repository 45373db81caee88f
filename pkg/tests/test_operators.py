import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, strategies as st

from chanfsi.errors import DimensionError
from chanfsi.operators import (FlowState, Grid2D, PatternAssembler, def_tensor_factorized,
                               def_tensor_field, div_h_field, gradient, h1_norm, l2_norm,
                               q1_h1_gram, q1_laplace_matrix, q1_viscous_matrix,
                               skew_convective_form, viscous_form)


@pytest.fixture
def grid():
    return Grid2D(2.0, 12, 6)


def _mesh(g):
    return np.meshgrid(g.y1, g.y2, indexing="ij")


def test_grid_basics(grid):
    assert grid.shape == (13, 7)
    assert grid.W.sum() == pytest.approx(2.0)
    assert grid.index(2, 3) == 2 * 7 + 3
    assert set(grid.wall) == {grid.index(i, 6) for i in range(13)}
    assert l2_norm(np.ones(grid.shape), grid) == pytest.approx(np.sqrt(2.0))


def test_grid_shape_checks(grid):
    with pytest.raises(DimensionError):
        grid.check_vector(np.zeros((2, 5, 5)))
    with pytest.raises(DimensionError):
        grid.check_scalar(np.zeros(3))


def test_flow_state_zero(grid):
    s = FlowState.zero(grid)
    assert s.bc_defect(grid) == 0.0
    assert np.all(s.pressure == 0.0)


def test_gradient_exact_on_quadratics(grid):
    Y1, Y2 = _mesh(grid)
    u = np.stack([Y1**2 + Y1 * Y2, 3 * Y2**2 - Y1])
    G = gradient(u, grid)
    np.testing.assert_allclose(G[..., 0, 0], 2 * Y1 + Y2, atol=1e-12)
    np.testing.assert_allclose(G[..., 0, 1], Y1, atol=1e-12)
    np.testing.assert_allclose(G[..., 1, 0], -1.0, atol=1e-12)
    np.testing.assert_allclose(G[..., 1, 1], 6 * Y2, atol=1e-12)
    assert h1_norm(np.zeros((2,) + grid.shape), grid) == 0.0


def test_div_h_of_flat_rotation_free_field(grid):
    Y1, Y2 = _mesh(grid)
    u = np.stack([Y1, -Y2])
    np.testing.assert_allclose(div_h_field(u, 1.0, grid), 0.0, atol=1e-12)


@given(st.floats(0.5, 2.0), st.floats(-0.5, 0.5))
def test_def_tensor_factorization_rounding(h0, slope):
    g = Grid2D(2.0, 8, 4)
    Y1, Y2 = _mesh(g)
    h = (h0 + slope * g.y1 / 2, np.full(g.n1, slope / 2))
    u = np.stack([np.sin(Y1) * Y2, np.cos(Y2) + Y1])
    np.testing.assert_allclose(def_tensor_field(u, h, g), def_tensor_factorized(u, h, g),
                               atol=1e-12)


def test_viscous_form_symmetric(grid):
    Y1, Y2 = _mesh(grid)
    u = np.stack([np.sin(Y1) * (1 - Y2**2), Y1 * Y2])
    v = np.stack([np.cos(Y2), Y1**2 * Y2])
    h = (1 + 0.1 * grid.y1, np.full(grid.n1, 0.1))
    assert viscous_form(u, v, h, 0.3, grid) == pytest.approx(viscous_form(v, u, h, 0.3, grid))


@given(st.integers(0, 1000))
def test_skew_form_vanishes_on_diagonal(seed):
    g = Grid2D(2.0, 6, 4)
    rng = np.random.default_rng(seed)
    u, z = rng.normal(size=(2, 2) + g.shape)
    h = (1 + 0.2 * rng.random(g.n1), rng.normal(size=g.n1))
    assert skew_convective_form(u, z, z, h, g) == 0.0


def test_q1_viscous_kernel_and_value(grid):
    A = q1_viscous_matrix(grid, 1.0, 1.0)
    assert abs(A - A.T).max() < 1e-14
    Y1, Y2 = _mesh(grid)
    for field in (np.stack([np.ones_like(Y1), 0 * Y1]), np.stack([0 * Y1, np.ones_like(Y1)]),
                  np.stack([-Y2, Y1])):
        np.testing.assert_allclose(A @ field.ravel(), 0.0, atol=1e-12)
    # u = (y2, 0): e_h : e_h = 1/2 everywhere, integral L/2
    shear = np.stack([Y2, 0 * Y1]).ravel()
    assert shear @ A @ shear == pytest.approx(1.0)


def test_q1_laplace_and_gram_exact_for_bilinear(grid):
    Y1, Y2 = _mesh(grid)
    f = (Y1 * Y2).ravel()
    lap = q1_laplace_matrix(grid, metric=False)
    np.testing.assert_allclose(lap @ np.ones(grid.size), 0.0, atol=1e-12)
    L = grid.L
    assert f @ lap @ f == pytest.approx(L / 3 + L**3 / 3)
    G = q1_h1_gram(grid)
    v = np.concatenate([f, f])
    assert v @ G @ v == pytest.approx(2 * (L / 3 + L**3 / 3))


def test_q1_laplace_metric_flat_matches_plain(grid):
    d = q1_laplace_matrix(grid, 1.0, metric=True) - q1_laplace_matrix(grid, metric=False)
    assert abs(d).max() < 1e-13


def test_pattern_assembler_sums_duplicates():
    rows = np.array([0, 1, 0, 2, 1])
    cols = np.array([0, 1, 0, 2, 0])
    pa = PatternAssembler(rows, cols, (3, 3))
    vals = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    ref = sps.coo_matrix((vals, (rows, cols)), shape=(3, 3)).toarray()
    np.testing.assert_array_equal(pa.build(vals).toarray(), ref)
