import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chanfsi.analysis import dependence_experiment
from chanfsi.coupling import CoupledModel, global_iterate
from chanfsi.output import (DEPENDENCE_COLUMNS, TIMESERIES_COLUMNS, OutputError, read_csv,
                            write_csv, write_dependence, write_iteration_report, write_json,
                            write_outputs, write_timeseries, write_vtk_snapshot)
from chanfsi.operators import Grid2D


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=20))
def test_csv_round_trip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "v.csv"
    write_csv(path, {"x": values})
    back = read_csv(path)["x"]
    assert back.tolist() == values


def test_zero_run_all_zero_energy(tmp_path, zero_config):
    m = CoupledModel(zero_config)
    traj = m.evaluate(m.zero_wall())
    cols = read_csv(write_timeseries(traj, tmp_path / "ts.csv"))
    assert tuple(cols) == TIMESERIES_COLUMNS
    assert np.all(cols["fluid_energy"] == 0) and np.all(cols["wall_energy"] == 0)
    assert cols["t"].size == zero_config.n_steps + 1


def test_iteration_csv_lengths(tmp_path, small_config, small_model):
    _, rep = global_iterate(small_config, model=small_model)
    cols = read_csv(write_iteration_report(rep, tmp_path / "it.csv"))
    assert cols["d_k"].size == rep.iterations
    assert cols["q_k"].size == rep.iterations - 1
    np.testing.assert_array_equal(cols["d_k"], rep.distances)
    data = json.loads(write_json(rep, tmp_path / "it.json").read_text())
    assert data["status"] == "converged"


def test_dependence_csv(tmp_path, small_config):
    rep = dependence_experiment(small_config, "pressure", 1e-2)
    cols = read_csv(write_dependence(rep, tmp_path / "dep.csv"))
    assert tuple(cols) == DEPENDENCE_COLUMNS
    np.testing.assert_array_equal(cols["ratio"], rep.ratio)


def test_vtk_snapshot_layout(tmp_path):
    g = Grid2D(2.0, 4, 4)
    u = np.zeros((2,) + g.shape)
    u[0] = np.arange(g.size).reshape(g.shape)
    text = write_vtk_snapshot(tmp_path / "a.vtk", g, u, np.zeros(g.shape),
                              np.full(g.n1, 2.0)).read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DIMENSIONS 5 5 1" in text and "POINT_DATA 25" in text
    i = text.index("VECTORS u double")
    # x (y1) runs fastest: second point is node (1, 0)
    assert float(text[i + 2].split()[0]) == u[0, 1, 0]
    j = text.index("SCALARS x2 double 1")
    x2 = np.array(text[j + 2:j + 2 + g.size], dtype=float)
    assert x2.max() == pytest.approx(2.0)


def test_write_outputs_and_unwritable(tmp_path, small_traj, small_model):
    files = write_outputs(small_traj, None, tmp_path / "o", small_model.grid, vtk=True,
                          vtk_every=5)
    assert files["timeseries"].exists()
    assert len(list((tmp_path / "o" / "vtk").glob("*.vtk"))) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        write_csv(blocker / "sub" / "a.csv", {"x": [1.0]})
