"""CSV, JSON and legacy VTK writers for runs, iteration reports and studies.

Floats are written with ``repr`` so every CSV round-trips exactly.
Column orders are fixed module constants.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np

from .analysis import ConsistencyResult, DependenceReport, EquicontinuityProfile, IdentityResult
from .coupling import IterationReport, Trajectory
from .errors import ChanFsiError
from .operators import Grid2D

__all__ = [
    "TIMESERIES_COLUMNS",
    "ITERATION_COLUMNS",
    "DEPENDENCE_COLUMNS",
    "OutputError",
    "write_csv",
    "read_csv",
    "write_timeseries",
    "write_iteration_report",
    "write_dependence",
    "write_identity",
    "write_consistency",
    "write_equicontinuity",
    "write_json",
    "write_vtk_snapshot",
    "write_vtk_series",
    "write_outputs",
]

TIMESERIES_COLUMNS = ("t", "fluid_energy", "wall_energy", "div_h_norm", "wall_mismatch_norm")
ITERATION_COLUMNS = ("k", "d_k", "q_k", "z_norm")
DEPENDENCE_COLUMNS = ("t", "lhs", "rhs", "ratio", "rhs_data", "rhs_deformation", "omega")


class OutputError(ChanFsiError, OSError):
    """A result file could not be written."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns: Dict[str, Iterable]) -> Path:
    """Write equal or ragged columns; short columns leave trailing cells empty."""
    path = Path(path)
    cols = {k: list(v) for k, v in columns.items()}
    n = max((len(v) for v in cols.values()), default=0)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols.keys())
            for i in range(n):
                w.writerow([_fmt(v[i]) if i < len(v) else "" for v in cols.values()])
    except OSError as exc:
        raise OutputError(f"cannot write '{path}': {exc}") from exc
    return path


def read_csv(path) -> Dict[str, np.ndarray]:
    """Read a CSV written by :func:`write_csv`; empty cells are dropped per column."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[j]) for r in body if j < len(r) and r[j] != ""])
            for j, name in enumerate(header)}


def write_timeseries(traj: Trajectory, path) -> Path:
    d = traj.diagnostics
    cols = {"t": traj.times}
    for k in TIMESERIES_COLUMNS[1:]:
        cols[k] = d[k]
    return write_csv(path, cols)


def write_iteration_report(report: IterationReport, path) -> Path:
    """One row per iteration; ``q_k`` starts at the second row.

    ``z_norm`` has one more entry than the iterations (it includes the
    start value), so it runs one row longer.
    """
    k = list(range(1, len(report.distances) + 1))
    q = [None] + list(report.factors) if report.distances else []
    return write_csv(path, {"k": k, "d_k": report.distances, "q_k": q,
                            "z_norm": report.z_norms})


def write_dependence(report: DependenceReport, path) -> Path:
    return write_csv(path, {"t": report.t, "lhs": report.lhs, "rhs": report.rhs,
                            "ratio": report.ratio, "rhs_data": report.rhs_data,
                            "rhs_deformation": report.rhs_deformation, "omega": report.omega})


def write_identity(results: Iterable[IdentityResult], path) -> Path:
    return _write_rows(path, ("kind", "max_residual", "mean_residual", "count"),
                       [(r.kind, r.max_residual, r.mean_residual, r.count) for r in results])


def write_consistency(results: Iterable[ConsistencyResult], path) -> Path:
    rows = []
    for r in results:
        for N, e in zip(r.N, r.errors):
            rows.append((r.kind, N, e, r.order))
    return _write_rows(path, ("kind", "N", "error", "order"), rows)


def write_equicontinuity(profile: EquicontinuityProfile, path) -> Path:
    return write_csv(path, {"tau": profile.taus, "value": profile.values,
                            "c": [profile.c]})


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([x if isinstance(x, str) else _fmt(x) for x in row])
    except OSError as exc:
        raise OutputError(f"cannot write '{path}': {exc}") from exc
    return path


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(obj, path) -> Path:
    """Dataclasses and arrays as JSON; non-finite floats become strings."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write '{path}': {exc}") from exc
    return path


def _vtk_scalars(name, f) -> str:
    # VTK structured points run fastest in x (y1)
    vals = np.asarray(f, dtype=float).T.ravel()
    return f"SCALARS {name} double 1\nLOOKUP_TABLE default\n" + "\n".join(map(repr, vals.tolist())) + "\n"


def write_vtk_snapshot(path, grid: Grid2D, u, q, h, title: str = "chanfsi") -> Path:
    """Legacy ASCII STRUCTURED_POINTS file with ``u``, ``q`` and ``x2 = y2 h``."""
    path = Path(path)
    u = np.asarray(u, dtype=float)
    x2 = grid.Y2 * np.asarray(h, dtype=float)[:, None]
    vec = np.stack([u[0].T.ravel(), u[1].T.ravel(), np.zeros(grid.size)], axis=1)
    parts = [
        "# vtk DataFile Version 3.0\n", f"{title}\n", "ASCII\n", "DATASET STRUCTURED_POINTS\n",
        f"DIMENSIONS {grid.n1} {grid.n2} 1\n", "ORIGIN 0 0 0\n",
        f"SPACING {grid.dy1!r} {grid.dy2!r} 1\n", f"POINT_DATA {grid.size}\n",
        "VECTORS u double\n", "\n".join(" ".join(map(repr, r)) for r in vec.tolist()) + "\n",
        _vtk_scalars("q", q), _vtk_scalars("x2", x2),
    ]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(parts))
    except OSError as exc:
        raise OutputError(f"cannot write '{path}': {exc}") from exc
    return path


def write_vtk_series(traj: Trajectory, grid: Grid2D, out_dir, every: int = 10) -> list:
    out_dir = Path(out_dir)
    paths = []
    for n in range(0, traj.times.size, max(1, every)):
        fl = traj.flow[n]
        paths.append(write_vtk_snapshot(out_dir / f"field_{n:05d}.vtk", grid, fl.u,
                                        fl.pressure, traj.history.h[n],
                                        title=f"chanfsi t={float(traj.times[n])!r}"))
    return paths


def write_outputs(traj: Optional[Trajectory], reports=None, out_dir="out", grid=None,
                  vtk: bool = False, vtk_every: int = 10) -> Dict[str, Path]:
    """Write the run time series, any reports and optional VTK snapshots.

    ``reports`` maps a file stem to an :class:`IterationReport`,
    :class:`DependenceReport` or any dataclass (written as JSON).
    """
    out_dir = Path(out_dir)
    written = {}
    if traj is not None:
        written["timeseries"] = write_timeseries(traj, out_dir / "timeseries.csv")
        if vtk:
            if grid is None:
                raise ValueError("grid is required for VTK output")
            write_vtk_series(traj, grid, out_dir / "vtk", vtk_every)
            written["vtk"] = out_dir / "vtk"
    for stem, rep in (reports or {}).items():
        if isinstance(rep, IterationReport):
            written[stem] = write_iteration_report(rep, out_dir / f"{stem}.csv")
            written[stem + "_json"] = write_json(rep, out_dir / f"{stem}.json")
        elif isinstance(rep, DependenceReport):
            written[stem] = write_dependence(rep, out_dir / f"{stem}.csv")
        else:
            written[stem] = write_json(rep, out_dir / f"{stem}.json")
    return written
