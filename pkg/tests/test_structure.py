import numpy as np
import pytest
from hypothesis import given, strategies as st

from chanfsi.errors import DimensionError, DomainError
from chanfsi.structure import (WallParams, WallState, fourth_difference, second_difference,
                               step_wall, string_energy, structural_factor, wall_energy,
                               wall_matrix, wall_rhs)

N = 21
DY = 2.0 / (N - 1)


def _params(E=None, r2=None, a=1.0, b=1.0, c=0.01):
    E = np.full(N, 0.1) if E is None else E
    r2 = np.zeros(N) if r2 is None else r2
    return WallParams(a, b, c, E, r2)


def test_structural_factor():
    np.testing.assert_allclose(structural_factor(2.0, 3.0, 0.5, [0.0, 0.75]), [3.0, 3.75])


def test_params_validation():
    with pytest.raises(DomainError):
        _params(a=0.0)
    with pytest.raises(DomainError):
        _params(E=np.zeros(N))
    with pytest.raises(DimensionError):
        WallParams(1, 1, 1, np.ones(N), np.zeros(N - 1))


def test_difference_operators_exact_in_interior():
    y = np.linspace(0, 2, N)
    B = fourth_difference(N, DY)
    K = second_difference(N, DY)
    np.testing.assert_allclose((B @ y[1:-1] ** 4)[2:-2], 24.0, rtol=1e-9)
    np.testing.assert_allclose((K @ y[1:-1] ** 2)[1:-1], -2.0, rtol=1e-9)
    for M in (B, K):
        d = M.toarray()
        np.testing.assert_array_equal(d, d.T)
        assert np.all(np.linalg.eigvalsh(d) > 0)


def test_fourth_difference_needs_five_nodes():
    with pytest.raises(DimensionError):
        fourth_difference(4, 0.1)


def test_wall_matrix_spd():
    A = wall_matrix(_params(), 1e4, 0.005, DY).toarray()
    np.testing.assert_allclose(A, A.T)
    np.linalg.cholesky(A)


def test_static_equilibrium_is_preserved():
    y = np.linspace(0, 2, N)
    r2 = -0.5 * np.sin(np.pi * y / 2)
    p = _params(r2=r2)
    K = second_difference(N, DY).toarray()
    eta = np.zeros(N)
    eta[1:-1] = np.linalg.solve(p.a * K + p.b * np.eye(N - 2), p.a * r2[1:-1])
    wall = WallState(eta, np.zeros(N))
    np.testing.assert_allclose(wall_rhs(wall, p, 0.01, DY), 0.0, atol=1e-12)
    new = step_wall(wall, np.zeros(N), p, 10.0, 0.01, DY)
    np.testing.assert_allclose(new.sigma, 0.0, atol=1e-12)
    assert new.t == pytest.approx(0.01)


def test_step_wall_input_checks():
    p = _params()
    with pytest.raises(DimensionError):
        step_wall(WallState.zero(N), np.zeros(N - 1), p, 1.0, 0.01, DY)
    bad = WallState(np.ones(N), np.zeros(N))
    with pytest.raises(DomainError):
        step_wall(bad, np.zeros(N), p, 1.0, 0.01, DY)


@given(st.integers(0, 10_000), st.floats(0.0, 100.0))
def test_free_wall_energy_never_grows(seed, kappa):
    rng = np.random.default_rng(seed)
    p = _params()
    eta = np.zeros(N)
    sig = np.zeros(N)
    eta[1:-1] = 0.1 * rng.normal(size=N - 2)
    sig[1:-1] = rng.normal(size=N - 2)
    wall = WallState(eta, sig)
    e0 = wall_energy(wall, p, DY)
    for _ in range(5):
        wall = step_wall(wall, np.zeros(N), p, kappa, 0.01, DY)
        e1 = wall_energy(wall, p, DY)
        assert e1 <= e0 * (1 + 1e-12)
        e0 = e1


def test_energies_agree_for_unit_factor():
    p = _params(E=np.ones(N))
    rng = np.random.default_rng(3)
    wall = WallState(np.r_[0, rng.normal(size=N - 2), 0], np.r_[0, rng.normal(size=N - 2), 0])
    assert wall_energy(wall, p, DY) == pytest.approx(string_energy(wall, p, DY))
    assert WallState.zero(N).clamp_defect() == 0.0
