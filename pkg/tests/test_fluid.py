import numpy as np
import pytest
import scipy.sparse as sps

from chanfsi.errors import DimensionError, DomainError, SolverError
from chanfsi.fluid import (BoundaryPressures, FluidStepper, SchemeParams, boundary_power,
                           fluid_energy, solve_sparse, step_fluid, weak_divergence)
from chanfsi.geometry import DeformationSnapshot
from chanfsi.operators import FlowState, Grid2D
from chanfsi.structure import WallState


def _const(v):
    return lambda x, t: np.full_like(x, v)


def test_scheme_params_kappa_default():
    assert SchemeParams(eps=1e-3, dt=0.01).kappa == pytest.approx(1e3)


def test_boundary_traces_and_norms():
    g = Grid2D(2.0, 8, 4)
    bp = BoundaryPressures(q_in=_const(2.0))
    qi, qo, qw = bp.traces(g, 0.0)
    assert qi.shape == (5,) and np.all(qo == 0) and qw.shape == (9,)
    assert bp.l2_norms(g, 0.0) == pytest.approx((2.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        BoundaryPressures(q_w=_const(np.nan)).traces(g, 0.0)


def test_solve_sparse_direct_and_failure():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(30, 30))
    A = sps.csr_matrix(M @ M.T + 30 * np.eye(30))
    b = rng.normal(size=30)
    x = solve_sparse(A, b)
    assert np.linalg.norm(A @ x - b) < 1e-10 * np.linalg.norm(b)
    np.testing.assert_allclose(solve_sparse(A, b, direct_limit=1), x, atol=1e-8)
    assert np.all(solve_sparse(A, np.zeros(30)) == 0.0)
    with pytest.raises(SolverError) as info:
        solve_sparse(sps.csr_matrix((30, 30)), b)
    assert info.value.residual is not None


def test_energy_and_power_helpers():
    g = Grid2D(2.0, 8, 4)
    s = FlowState.zero(g)
    s.u[0] = 1.0
    assert fluid_energy(s, 2.0, g) == pytest.approx(2.0)
    bp = BoundaryPressures(q_in=_const(3.0), q_out=_const(1.0))
    # h(0) q_in |inlet| - h(L) q_out |outlet| with unit heights and unit u1
    assert boundary_power(s, 1.0, bp, g, 0.0) == pytest.approx(2.0)


def test_weak_divergence_of_constant_field():
    g = Grid2D(2.0, 8, 4)
    snap = DeformationSnapshot.flat(g.y1, 1.3)
    u = np.stack([np.ones(g.shape), np.zeros(g.shape)])
    np.testing.assert_allclose(weak_divergence(u, snap, g), 0.0, atol=1e-12)


def _stepper(g, bp, eps=1e-8, kappa=1e10, dt=5.0, nu=0.5):
    return FluidStepper(g, nu, bp, SchemeParams(eps=eps, dt=dt, kappa=kappa))


def test_zero_data_stays_zero():
    g = Grid2D(2.0, 8, 4)
    st_ = _stepper(g, BoundaryPressures(), eps=1e-3, kappa=1e3, dt=0.01)
    s = FlowState.zero(g)
    h = DeformationSnapshot.flat(g.y1)
    for _ in range(3):
        s = st_.step(s, WallState.zero(g.n1), h, h)
    assert np.all(s.u == 0.0) and np.all(s.q == 0.0) and s.q_level == 0.0


def test_stokes_limit_poiseuille():
    # tiny pressure drop: convection is negligible and the steady state is
    # u1 = (G / nu) (1 - y2^2) with G = drop / L (no factor 2 in the viscous form)
    amp, nu, L = 1e-4, 0.5, 2.0
    errs = []
    for N in (4, 8):
        g = Grid2D(L, 2 * N, N)
        st_ = _stepper(g, BoundaryPressures(q_in=_const(amp)), nu=nu)
        s = FlowState.zero(g)
        h = DeformationSnapshot.flat(g.y1)
        for _ in range(30):
            s = st_.step(s, WallState.zero(g.n1), h, h)
        exact = amp / L / nu * (1 - g.y2**2)
        assert np.abs(s.u[0] - exact[None, :]).max() < 1e-4 * amp / nu
        assert np.abs(s.u[1]).max() < 1e-4 * amp
        errs.append(np.abs(s.pressure - amp * (1 - g.y1 / L)[:, None]).max())
        assert s.bc_defect(g) == 0.0
    assert errs[1] < 0.6 * errs[0]


def test_step_fluid_wrapper_and_checks():
    g = Grid2D(2.0, 8, 4)
    bp = BoundaryPressures(q_w=_const(0.01))
    sp_ = SchemeParams(eps=1e-3, dt=0.01)
    h = DeformationSnapshot.flat(g.y1)
    s = step_fluid(FlowState.zero(g), WallState.zero(g.n1), h, h, bp, sp_, g, 0.1)
    assert np.abs(s.u).max() > 0
    bad = DeformationSnapshot.flat(np.linspace(0, 2, 5))
    with pytest.raises(DimensionError):
        FluidStepper(g, 0.1, bp, sp_).step(s, WallState.zero(g.n1), bad, bad)
    with pytest.raises(DomainError):
        FluidStepper(g, 0.0, bp, sp_)


def test_step_energy_decays_without_forcing():
    g = Grid2D(2.0, 8, 4)
    st_ = _stepper(g, BoundaryPressures(), eps=1e-3, kappa=1e3, dt=0.01, nu=0.1)
    Y1, Y2 = np.meshgrid(g.y1, g.y2, indexing="ij")
    s = FlowState.zero(g)
    s.u[0] = np.cos(np.pi * Y2 / 2) * (1 + 0.3 * np.sin(Y1))
    h = DeformationSnapshot.flat(g.y1)
    e = [fluid_energy(s, h, g)]
    for _ in range(4):
        s = st_.step(s, WallState.zero(g.n1), h, h)
        e.append(fluid_energy(s, h, g))
    assert np.all(np.diff(e) < 0)


def test_fluid_energy_quadratic_scaling():
    g = Grid2D(2.0, 8, 4)
    rng = np.random.default_rng(5)
    s = FlowState.zero(g)
    s.u[:] = rng.normal(size=s.u.shape)
    t = FlowState(3.0 * s.u, s.q)
    assert fluid_energy(t, 1.5, g) == pytest.approx(9.0 * fluid_energy(s, 1.5, g), rel=1e-13)
    assert fluid_energy(FlowState.zero(g), 1.0, g) == 0.0
