import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from chanfsi.config import PressureSpec
from chanfsi.coupling import (CoupledModel, IterationReport, evaluate_F, global_iterate,
                              z_components, z_distance)
from chanfsi.errors import AdmissibilityError, DimensionError


def test_z_distance_analytic():
    # eta = t (1 - cos(2 pi y/L)): rate 1 - cos, D2 rate = (2 pi/L)^2 cos
    L, T = 2.0, 0.1
    y = np.linspace(0, L, 401)
    t = np.linspace(0, T, 21)
    eta = t[:, None] * (1 - np.cos(2 * np.pi * y / L))[None, :]
    h1, winf = z_components(eta, np.zeros_like(eta), t[1] - t[0], y[1] - y[0])
    assert h1 == pytest.approx(math.sqrt(T * (2 * np.pi / L) ** 4 * L / 2), rel=1e-3)
    assert winf == pytest.approx(math.sqrt(1.5 * L), rel=1e-6)
    assert z_distance(eta, eta, 0.1, 0.1) == 0.0


def test_z_distance_shape_checks():
    with pytest.raises(DimensionError):
        z_distance(np.zeros((3, 5)), np.zeros((3, 6)), 0.1, 0.1)
    with pytest.raises(DimensionError):
        z_distance(np.zeros((1, 5)), np.zeros((1, 5)), 0.1, 0.1)


def test_zero_data_gives_zero_trajectory(zero_config):
    traj = evaluate_F(np.zeros((zero_config.n_steps + 1, zero_config.N1 + 1)), zero_config)
    assert np.all(traj.u == 0.0) and np.all(traj.eta == 0.0) and np.all(traj.sigma == 0.0)
    assert np.all(traj.total_energy == 0.0)


def test_trajectory_layout(small_traj, small_config):
    n = small_config.n_steps + 1
    assert small_traj.eta.shape == (n, small_config.N1 + 1)
    assert small_traj.u.shape == (n, 2, small_config.N1 + 1, small_config.N2 + 1)
    np.testing.assert_allclose(small_traj.times, small_config.dt * np.arange(n))
    assert small_traj.eta[:, [0, -1]].max() == 0.0
    for key in ("fluid_energy", "wall_energy", "div_h_norm", "div_h_fd_norm",
                "wall_mismatch_norm", "work"):
        assert small_traj.diagnostics[key].shape == (n,)
        assert np.all(np.isfinite(small_traj.diagnostics[key]))


def test_energy_never_exceeds_work(small_traj):
    assert np.all(small_traj.energy_excess() <= 0.0)
    # the pulse pushes the wall: something actually happened
    assert np.abs(small_traj.eta).max() > 1e-6


def test_history_shape_error(small_model):
    with pytest.raises(DimensionError):
        small_model.history(np.zeros((2, 3)))


def test_model_is_reusable_across_threads(small_model):
    delta = small_model.zero_wall()
    with ThreadPoolExecutor(2) as ex:
        a, b = ex.map(small_model.evaluate, [delta, delta])
    np.testing.assert_array_equal(a.eta, b.eta)


def test_global_iterate_converges_on_small_config(small_config, small_model):
    traj, rep = global_iterate(small_config, model=small_model)
    assert rep.converged and rep.status == "converged"
    assert len(rep.factors) == rep.iterations - 1
    assert rep.max_factor < 1
    assert rep.confirm_distance <= rep.tol
    assert len(rep.z_norms) == rep.iterations + 1


def test_global_iterate_zero_data_one_iteration(zero_config):
    _, rep = global_iterate(zero_config, tol=0.0)
    assert rep.converged and rep.iterations == 1 and rep.distances == [0.0]


def test_global_iterate_max_iter_report(small_config, small_model):
    traj, rep = global_iterate(small_config, max_iter=1, model=small_model)
    assert rep.status == "max_iter" and not rep.converged
    assert "halving T" in rep.message
    assert traj is not None


def test_global_iterate_leaves_ball(small_config):
    cfg = small_config.replace(q_w=PressureSpec("pulse", (5.0, 0.02, 0.06)))
    with pytest.raises(AdmissibilityError) as info:
        global_iterate(cfg)
    rep = info.value.report
    assert isinstance(rep, IterationReport) and rep.status == "inadmissible"
    assert info.value.iterate == 1
    assert "ball radius" in rep.message


def test_evaluate_rejects_inadmissible_deformation(small_model):
    delta = small_model.zero_wall()
    delta[:, 5] = -0.9
    with pytest.raises(AdmissibilityError) as info:
        small_model.evaluate(delta)
    assert not info.value.report.passed
