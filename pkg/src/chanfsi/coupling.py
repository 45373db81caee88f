"""Geometry mapping F and the global fixed-point iteration over wall trajectories.

``evaluate_F`` solves the penalized flow/wall problem on a prescribed
deformation ``h = R0 + delta`` over the whole interval ``[0, T]`` and
returns the resulting wall displacement. ``global_iterate`` repeats
``eta_k = F(eta_{k-1})`` and monitors the contraction factors in the norm of
``H^1(0,T; H^2_0) /\\ W^{1,inf}(0,T; L^2)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sps

from .config import ModelConfig
from .errors import AdmissibilityError, DimensionError
from .fluid import BoundaryPressures, FluidStepper, SchemeParams, boundary_power, fluid_energy, \
    solve_sparse
from .geometry import (AdmissibilityParams, AdmissibilityReport, DeformationHistory,
                       check_admissible, eval_deformation)
from .operators import FlowState, Grid2D, div_h_field, l2_norm
from .structure import WallParams, WallState, structural_factor, wall_energy, wall_matrix, wall_rhs

log = logging.getLogger(__name__)

__all__ = [
    "CoupledModel",
    "Trajectory",
    "IterationReport",
    "evaluate_F",
    "z_distance",
    "z_components",
    "global_iterate",
]


@dataclass
class Trajectory:
    """Flow and wall states at every time level of one solve on a fixed ``h``.

    ``diagnostics`` holds per-level arrays: ``fluid_energy``, ``wall_energy``,
    ``div_h_norm`` (divergence of the continuity equation actually solved),
    ``div_h_fd_norm`` (nodal finite-difference divergence),
    ``wall_mismatch_norm`` and ``work`` (energy supplied by the data during
    the step ending at that level; zero at the first level).
    """

    times: np.ndarray
    flow: List[FlowState]
    wall: List[WallState]
    history: DeformationHistory
    diagnostics: dict = field(default_factory=dict)

    @property
    def eta(self) -> np.ndarray:
        return np.array([w.eta for w in self.wall])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([w.sigma for w in self.wall])

    @property
    def u(self) -> np.ndarray:
        return np.array([s.u for s in self.flow])

    @property
    def total_energy(self) -> np.ndarray:
        return self.diagnostics["fluid_energy"] + self.diagnostics["wall_energy"]

    def energy_excess(self) -> np.ndarray:
        """Per-step ``dE_total - |work|``; never positive for a sound scheme."""
        return np.diff(self.total_energy) - np.abs(self.diagnostics["work"][1:])


class CoupledModel:
    """Fixed data of one configuration: grid, steppers, wall and admissibility parameters.

    The object holds no per-run state, so one instance can evaluate ``F``
    repeatedly (and from several threads). ``pressures`` overrides the
    boundary pressures built from the configuration.
    """

    def __init__(self, cfg: ModelConfig, pressures: Optional[BoundaryPressures] = None):
        self.cfg = cfg
        self.grid = Grid2D(cfg.L, cfg.N1, cfg.N2)
        self.radius = cfg.R0.build(cfg.L)
        y1 = self.grid.y1
        self.y1 = y1
        self.dy = self.grid.dy1
        self.times = cfg.dt * np.arange(cfg.n_steps + 1)
        self.wall_params = WallParams(
            a=cfg.a, b=cfg.b, c=cfg.c,
            Estiff=structural_factor(cfg.rho, cfg.rho_w, cfg.hbar, self.radius.d1(y1)),
            R0_y1y1=np.asarray(self.radius.d2(y1), dtype=float))
        self.bp = pressures or BoundaryPressures(cfg.q_in, cfg.q_out, cfg.q_w)
        self.sp = SchemeParams(eps=cfg.eps, dt=cfg.dt, kappa=cfg.kappa, tol=cfg.linear_tol,
                               max_iter=cfg.linear_max_iter)
        r_min, r_max = cfg.R_bounds
        self.adm = AdmissibilityParams(alpha=cfg.alpha, K=cfg.K, R_min=r_min, R_max=r_max,
                                       T_max=cfg.T_max)
        self.stepper = FluidStepper(self.grid, cfg.nu, self.bp, self.sp)
        n_w = self.grid.n1 - 2
        E = np.asarray(self.wall_params.Estiff)[1:-1]
        self._wall_scale = E * self.grid.w1[1:-1]  # rows scaled to make the coupling symmetric
        self._wall_A = sps.diags(self._wall_scale) @ wall_matrix(self.wall_params, cfg.kappa,
                                                                 cfg.dt, self.dy)
        m = self.stepper.free.size
        self._coupling = sps.csr_matrix(
            (-self.stepper.wall_weights, (self.stepper.wall_rows, np.arange(n_w))),
            shape=(m, n_w))

    @property
    def n_times(self) -> int:
        return self.times.size

    def zero_wall(self) -> np.ndarray:
        return np.zeros((self.n_times, self.grid.n1))

    def history(self, delta) -> DeformationHistory:
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.n_times, self.grid.n1):
            raise DimensionError(f"wall trajectory has shape {delta.shape}, expected "
                                 f"{(self.n_times, self.grid.n1)}")
        return eval_deformation(delta, self.radius, self.y1, self.times, clamped=True)

    def admissibility(self, delta) -> AdmissibilityReport:
        return check_admissible(self.history(delta), self.adm)

    # -- one solve on a fixed deformation ------------------------------------
    def step(self, flow: FlowState, wall: WallState, h_prev, h_next):
        """One coupled step: flow and wall velocity in a single bordered solve."""
        st = self.stepper
        sys_ = st.assemble(flow, h_prev, h_next, flow.t + self.cfg.dt)
        rhs_w = self._wall_scale * wall_rhs(wall, self.wall_params, self.cfg.dt, self.dy)
        A = sps.bmat([[sys_.A, self._coupling], [self._coupling.T, self._wall_A]], format="csr")
        x = solve_sparse(A, np.concatenate([sys_.rhs, rhs_w]), self.sp.tol, self.sp.max_iter,
                         self.sp.direct_limit)
        m = sys_.rhs.size
        new_flow = st.unpack(x[:m], flow.t + self.cfg.dt, h_next)
        sigma = np.zeros(self.grid.n1)
        sigma[1:-1] = x[m:]
        new_wall = WallState(wall.eta + self.cfg.dt * sigma, sigma, wall.t + self.cfg.dt)
        return new_flow, new_wall

    def _diagnose(self, flow: FlowState, wall: WallState, snap):
        g = self.grid
        div = self.stepper.divergence(flow, snap)
        mismatch = flow.u[1][:, -1] - wall.sigma
        return (fluid_energy(flow, snap, g), wall_energy(wall, self.wall_params, self.dy),
                l2_norm(div, g), l2_norm(div_h_field(flow.u, snap, g), g),
                float(np.sqrt(g.w1 @ mismatch**2)))

    def evaluate(self, delta, check: bool = True) -> Trajectory:
        """Solve on ``h = R0 + delta``; the wall part of the result is ``F(delta)``."""
        hist = self.history(delta)
        if check:
            rep = check_admissible(hist, self.adm)
            if not rep.passed:
                raise AdmissibilityError(f"inadmissible deformation: {rep.summary()}", report=rep)
        g, cfg = self.grid, self.cfg
        flow = FlowState.zero(g, 0.0)
        wall = WallState.zero(g.n1, 0.0)
        flows, walls = [flow], [wall]
        diag = {k: np.zeros(self.n_times) for k in
                ("fluid_energy", "wall_energy", "div_h_norm", "div_h_fd_norm",
                 "wall_mismatch_norm", "work")}
        forcing = cfg.a * self.wall_params.Estiff * self.wall_params.R0_y1y1 * g.w1

        def record(n, fl, wa, snap):
            vals = self._diagnose(fl, wa, snap)
            for key, v in zip(("fluid_energy", "wall_energy", "div_h_norm", "div_h_fd_norm",
                               "wall_mismatch_norm"), vals):
                diag[key][n] = v

        record(0, flow, wall, hist.snapshot(0))
        for n in range(1, self.n_times):
            h_prev, h_next = hist.snapshot(n - 1), hist.snapshot(n)
            flow, wall = self.step(flow, wall, h_prev, h_next)
            flow.t = wall.t = float(self.times[n])  # avoid accumulated rounding in stamps
            flows.append(flow)
            walls.append(wall)
            record(n, flow, wall, h_next)
            power = boundary_power(flow, h_next, self.bp, g, flow.t) + float(forcing @ wall.sigma)
            diag["work"][n] = cfg.dt * power
        return Trajectory(self.times.copy(), flows, walls, hist, diag)


def evaluate_F(delta, config: ModelConfig, model: Optional[CoupledModel] = None) -> Trajectory:
    """Run the coupled solve on the deformation ``R0 + delta`` (see :class:`CoupledModel`)."""
    model = model or CoupledModel(config)
    return model.evaluate(delta)


# ---------------------------------------------------------------------------
# Z distance
# ---------------------------------------------------------------------------

def _clamped_second_difference(f: np.ndarray, dy: float) -> np.ndarray:
    """Second differences along the last axis with reflected ghosts at zero ends."""
    pad = np.concatenate([f[..., 1:2], f, f[..., -2:-1]], axis=-1)
    return (pad[..., :-2] - 2.0 * pad[..., 1:-1] + pad[..., 2:]) / dy**2


def z_components(eta1, eta2, dt: float, dy: float):
    """The two parts of the discrete Z distance.

    Returns ``(h1_part, winf_part)`` with ``h1_part = (sum_n dt |D2 dtη|^2)^(1/2)``
    and ``winf_part = max_n |dtη|``, where ``dtη`` are forward time differences
    of ``eta1 - eta2``, ``D2`` the clamped second difference and ``|.|`` the
    trapezoidal L2 norm in y1.
    """
    e1, e2 = np.asarray(eta1, dtype=float), np.asarray(eta2, dtype=float)
    if e1.shape != e2.shape or e1.ndim != 2:
        raise DimensionError(f"wall trajectories differ in shape: {e1.shape} vs {e2.shape}")
    if e1.shape[0] < 2:
        raise DimensionError("need at least two time levels")
    d = e1 - e2
    rate = np.diff(d, axis=0) / dt
    w = np.full(d.shape[1], dy)
    w[[0, -1]] *= 0.5
    curv = _clamped_second_difference(rate, dy)
    h1 = math.sqrt(dt * float(np.sum((curv**2) @ w)))
    winf = float(np.sqrt(np.max((rate**2) @ w)))
    return h1, winf


def z_distance(eta1, eta2, dt: float, dy: float) -> float:
    """Discrete norm of ``eta1 - eta2`` in ``H^1(0,T;H^2_0) /\\ W^{1,inf}(0,T;L^2)``."""
    return sum(z_components(eta1, eta2, dt, dy))


# ---------------------------------------------------------------------------
# global iteration
# ---------------------------------------------------------------------------

@dataclass
class IterationReport:
    """History of the global iteration.

    ``distances[k]`` is ``|eta_{k+1} - eta_k|_Z``; ``factors[k-1]`` the ratio
    ``distances[k] / distances[k-1]`` (NaN when the previous distance is
    within ten times the solver floor).
    """

    distances: list = field(default_factory=list)
    factors: list = field(default_factory=list)
    z_norms: list = field(default_factory=list)
    admissibility: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"
    iterations: int = 0
    tol: float = 0.0
    floor: float = 0.0
    confirm_distance: float = math.nan
    message: str = ""

    @property
    def max_factor(self) -> float:
        f = [x for x in self.factors if not math.isnan(x)]
        return max(f) if f else math.nan


def global_iterate(config: ModelConfig, eta0=None, tol: Optional[float] = None,
                   max_iter: Optional[int] = None, model: Optional[CoupledModel] = None,
                   confirm: bool = True):
    """Iterate ``eta_k = F(eta_{k-1})`` from ``eta0`` (zero by default).

    Stops when the Z distance of consecutive iterates is at most ``tol``,
    after ``max_iter`` evaluations, or when the contraction factor stays at
    or above one for three consecutive iterations. Every iterate must stay in
    the ball ``|eta|_Z <= R_min - alpha`` and satisfy the admissibility
    bounds; otherwise :class:`AdmissibilityError` is raised with the partial
    report attached.

    Returns
    -------
    traj : Trajectory
        Last evaluated trajectory (the fixed point when converged).
    report : IterationReport
    """
    model = model or CoupledModel(config)
    tol = config.iter_tol if tol is None else tol
    max_iter = config.max_iter if max_iter is None else max_iter
    dt, dy = config.dt, model.dy
    eta = model.zero_wall() if eta0 is None else np.asarray(eta0, dtype=float)
    floor = config.linear_tol
    report = IterationReport(tol=tol, floor=floor)
    radius = model.adm.ball_radius
    growing = 0
    traj = None

    def admit(k, candidate):
        rep = model.admissibility(candidate)
        znorm = z_distance(candidate, np.zeros_like(candidate), dt, dy)
        report.admissibility.append(rep)
        report.z_norms.append(znorm)
        problems = [] if rep.passed else [rep.summary()]
        if znorm > radius:
            problems.append(f"|eta|_Z = {znorm:.6g} exceeds the ball radius {radius:.6g}")
        if problems:
            report.status = "inadmissible"
            report.message = f"iterate {k} leaves the admissible ball: " + "; ".join(problems)
            raise AdmissibilityError(report.message, report=report, iterate=k)

    admit(0, eta)
    for k in range(1, max_iter + 1):
        traj = model.evaluate(eta, check=False)
        new = traj.eta
        report.iterations = k
        admit(k, new)
        d = z_distance(new, eta, dt, dy)
        report.distances.append(d)
        if k > 1:
            prev = report.distances[-2]
            q = d / prev if prev > 10.0 * floor else math.nan
            report.factors.append(q)
            growing = growing + 1 if (not math.isnan(q) and q >= 1.0) else 0
        log.info("iterate %d: d = %.3e", k, d)
        eta = new
        if d <= tol:
            report.converged = True
            report.status = "converged"
            break
        if growing >= 3:
            report.status = "diverging"
            report.message = (f"contraction factor >= 1 for 3 consecutive iterations "
                              f"(last {report.factors[-1]:.3f}); try halving T")
            return traj, report
    else:
        report.status = "max_iter"
        report.message = f"no convergence within {max_iter} iterations; try halving T"
        return traj, report

    if confirm:
        traj = model.evaluate(eta, check=False)
        report.confirm_distance = z_distance(traj.eta, eta, dt, dy)
        if report.confirm_distance > tol:
            report.converged = False
            report.status = "unconfirmed"
            report.message = (f"re-evaluation moved the fixed point by "
                              f"{report.confirm_distance:.3e} > tol")
    return traj, report
