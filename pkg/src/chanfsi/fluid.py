"""Backward-Euler stepper for the penalized, artificially compressible flow.

Velocity and pressure are bilinear (Q1) on the reference rectangle, with
2x2 Gauss quadrature and a lumped mass. Tested with ``psi`` and ``phi`` the
step equations read

    sum W [ h_mid u - h_old u_old ] . psi / dt
      + mesh-motion term (skew in u, psi)
      + ((u, psi))_h + 1/2 [B_h(w, u, psi) - B_h(w, psi, u)]     (w = u_old)
      - (h q, div_h psi) + boundary pressures
      + kappa sum_wall w1 (u2 - sigma) psi2 = 0,
    (h div_h u, phi) + eps a1(q, phi) = 0,

with ``h_mid = (h_old + h_new)/2``. The mass average and the skew
mesh-motion term make the discrete energy balance exact for a constant
structural factor. The convective term uses the skew form, equal to the
trilinear form with its boundary corrections for ``div_h``-free transport
fields.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import DimensionError, DomainError, SolverError
from .geometry import DeformationSnapshot
from .operators import FlowState, Grid2D, PatternAssembler, Q1Kit, l2_norm
from .structure import WallState

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryPressures",
    "SchemeParams",
    "FluidStepper",
    "LinearSystem",
    "step_fluid",
    "fluid_energy",
    "boundary_power",
    "solve_sparse",
    "weak_divergence",
]

Profile = Callable[[np.ndarray, float], np.ndarray]


def _zero_profile(x, t):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class BoundaryPressures:
    """Kinematic pressures on the inlet, outlet and wall traces.

    Each entry is a callable ``f(coord, t)`` returning values on the trace
    nodes (``y2`` for in/outflow, ``y1`` for the wall).
    """

    q_in: Profile = _zero_profile
    q_out: Profile = _zero_profile
    q_w: Profile = _zero_profile

    def traces(self, grid: Grid2D, t: float):
        vals = []
        for f, x in ((self.q_in, grid.y2), (self.q_out, grid.y2), (self.q_w, grid.y1)):
            v = np.broadcast_to(np.asarray(f(x, t), dtype=float), x.shape)
            if not np.all(np.isfinite(v)):
                raise DomainError(f"boundary pressure is not finite at t = {t}")
            vals.append(v)
        return tuple(vals)

    def l2_norms(self, grid: Grid2D, t: float):
        """Trapezoidal L2 norms of the three traces at time ``t``."""
        qi, qo, qw = self.traces(grid, t)
        return (float(np.sqrt(grid.w2 @ qi**2)), float(np.sqrt(grid.w2 @ qo**2)),
                float(np.sqrt(grid.w1 @ qw**2)))


@dataclass(frozen=True)
class SchemeParams:
    """Penalty, compressibility, time step and linear-solver settings.

    ``kappa`` defaults to ``1/eps``.
    """

    eps: float
    dt: float
    kappa: Optional[float] = None
    tol: float = 1e-10
    max_iter: int = 1000
    direct_limit: int = 20000

    def __post_init__(self):
        if self.kappa is None:
            object.__setattr__(self, "kappa", 1.0 / self.eps)
        for name in ("eps", "dt", "kappa", "tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass
class LinearSystem:
    """Assembled fluid system restricted to free unknowns."""

    A: sps.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    n_full: int
    wall_rows: np.ndarray = field(repr=False)  # positions of interior-wall u2 in ``free``
    wall_weights: np.ndarray = field(repr=False)  # kappa * w1 on interior wall nodes


def solve_sparse(A, b, tol: float = 1e-10, max_iter: int = 1000, direct_limit: int = 20000):
    """Solve ``A x = b``; direct LU below ``direct_limit`` unknowns, else GMRES.

    The direct path first tries a symmetric minimum-degree ordering with
    diagonal pivoting (little fill for these saddle-point systems) and falls
    back to COLAMD with partial pivoting. Raises SolverError when the
    relative residual stays above ``tol``.
    """
    A = A.tocsc()
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return np.zeros_like(b)
    if A.shape[0] < direct_limit:
        x, res = None, np.inf
        for kw in (dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options=dict(SymmetricMode=True)),
                   dict(permc_spec="COLAMD")):
            try:
                lu = spla.splu(A, **kw)
            except RuntimeError:  # exactly singular pivot
                continue
            x = lu.solve(b)
            r = b - A @ x
            if np.linalg.norm(r) > tol * bn:
                x += lu.solve(r)  # one refinement sweep
                r = b - A @ x
            res = np.linalg.norm(r) / bn
            if res <= tol:
                return x
    else:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=M, rtol=tol, restart=200, maxiter=max_iter)
        res = np.linalg.norm(b - A @ x) / bn
        if res <= tol:
            return x
    raise SolverError(f"linear solve stalled at relative residual {res:.3e}", residual=float(res))


def fluid_energy(state: FlowState, h, grid: Grid2D) -> float:
    """``1/2 int_D h |u|^2`` by the trapezoidal rule."""
    hv = h.h if isinstance(h, DeformationSnapshot) else np.broadcast_to(np.asarray(h, float), (grid.n1,))
    return 0.5 * l2_norm(state.u, grid, weight=np.asarray(hv)[:, None]) ** 2


def boundary_power(state: FlowState, h, bp: BoundaryPressures, grid: Grid2D, t: float) -> float:
    """Rate of work of the boundary pressures on ``state``.

    Equals ``int h(0) q_in u1(0) - int h(L) q_out u1(L) - int q_w u2(wall)``.
    """
    qi, qo, qw = bp.traces(grid, t)
    hv = h.h if isinstance(h, DeformationSnapshot) else np.broadcast_to(np.asarray(h, float), (grid.n1,))
    u = state.u
    return float(hv[0] * (grid.w2 @ (qi * u[0, 0, :])) - hv[-1] * (grid.w2 @ (qo * u[0, -1, :]))
                 - grid.w1 @ (qw * u[1, :, -1]))


def _h_arrays(snap, grid: Grid2D):
    if np.shape(snap.h) != (grid.n1,):
        raise DimensionError("deformation snapshot does not match the grid")
    h = np.asarray(snap.h, dtype=float)
    if np.any(h <= 0.0):
        raise DomainError("wall height must stay positive")
    return h, np.asarray(snap.h_y1, dtype=float)


def weak_divergence(u, h, grid: Grid2D, kit: Q1Kit | None = None) -> np.ndarray:
    """Nodal ``div_h u`` consistent with the stepper's continuity equation.

    The element divergence ``int phi_p h div_h u`` is divided by the lumped
    weight ``W h`` of node ``p``.
    """
    kit = kit or Q1Kit(grid)
    u = grid.check_vector(u)
    hv, hy = _h_arrays(h, grid)
    B = kit.divergence_local(hv, hy)  # [e, p, k, a]
    uf = u.reshape(2, -1)
    vals = np.einsum("epka,kea->ep", B, uf[:, kit.conn])
    out = np.bincount(kit.conn.ravel(), weights=vals.ravel(), minlength=grid.size)
    return (out / (grid.W.ravel() * np.repeat(hv, grid.n2))).reshape(grid.shape)


class FluidStepper:
    """Owns the fixed data of the flow problem and advances ``FlowState``.

    Unknowns are ordered ``[u1, u2, q]`` before removing the nodes with
    essential conditions; the sparsity pattern is built once. The pressure is
    solved for in full (its level is fixed by the open-boundary data) and
    split into its mean and a zero-mean part afterwards.

    Parameters
    ----------
    grid : Grid2D
    nu : float
        Kinematic viscosity ``mu/rho``.
    bp : BoundaryPressures
    sp : SchemeParams
    """

    def __init__(self, grid: Grid2D, nu: float, bp: BoundaryPressures, sp: SchemeParams):
        if not nu > 0:
            raise DomainError("nu must be positive")
        self.grid = grid
        self.nu = float(nu)
        self.bp = bp
        self.sp = sp
        self.kit = kit = Q1Kit(grid)
        n = grid.size
        self.n_full = 3 * n
        fixed = np.zeros(self.n_full, dtype=bool)
        fixed[grid.wall] = True  # u1 = 0 on the wall
        for idx in (grid.inlet, grid.outlet, grid.center):
            fixed[n + idx] = True  # u2 = 0 on inlet, outlet, centerline
        self.free = np.flatnonzero(~fixed)
        pos = -np.ones(self.n_full, dtype=int)
        pos[self.free] = np.arange(self.free.size)
        self._pos = pos
        self.wall_rows = pos[n + grid.wall[1:-1]]
        self.wall_weights = sp.kappa * grid.w1[1:-1]

        ne = kit.n_elements
        conn = kit.conn
        comp = np.arange(2)
        shape5 = (ne, 2, 4, 2, 4)
        v_rows = np.broadcast_to(comp[None, :, None, None, None] * n
                                 + conn[:, None, :, None, None], shape5).ravel()
        v_cols = np.broadcast_to(comp[None, None, None, :, None] * n
                                 + conn[:, None, None, None, :], shape5).ravel()
        shape4 = (ne, 4, 2, 4)  # [e, p, k, a]
        vel = np.broadcast_to(comp[None, None, :, None] * n + conn[:, None, None, :], shape4).ravel()
        prs = np.broadcast_to(2 * n + conn[:, :, None, None], shape4).ravel()
        s0, s1 = kit.pairs(0, 0), kit.pairs(n, n)
        lap = kit.pairs(2 * n, 2 * n)
        rows = [np.arange(2 * n), s0[0], s1[0], v_rows, vel, prs, lap[0]]
        cols = [np.arange(2 * n), s0[1], s1[1], v_cols, prs, vel, lap[1]]
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        self._keep = (pos[rows] >= 0) & (pos[cols] >= 0)
        m = self.free.size
        self._pattern = PatternAssembler(pos[rows[self._keep]], pos[cols[self._keep]], (m, m))

    # -- assembly ---------------------------------------------------------
    def assemble(self, state: FlowState, h_prev: DeformationSnapshot,
                 h_next: DeformationSnapshot, t_new: float) -> LinearSystem:
        """Assemble the step system without the wall-velocity coupling."""
        grid, sp, kit = self.grid, self.sp, self.kit
        n = grid.size
        h0, _ = _h_arrays(h_prev, grid)
        h1, hy1 = _h_arrays(h_next, grid)
        dt = sp.dt
        W = grid.W.ravel()
        h_old = np.repeat(h0, grid.n2)
        h_new = np.repeat(h1, grid.n2)

        diag = np.tile(W * 0.5 * (h_new + h_old) / dt, 2)
        diag[n + grid.wall[1:-1]] += self.wall_weights
        C = kit.transport_local(h1, hy1, state.u.reshape(2, -1))
        skew = 0.5 * (C - np.swapaxes(C, 1, 2)) + kit.mesh_motion_local((h1 - h0) / dt)
        visc = kit.viscous_local(h1, hy1, self.nu)
        B = kit.divergence_local(h1, hy1)
        lap = kit.laplace_local(h1, hy1)
        vals = np.concatenate([diag, skew.ravel(), skew.ravel(), visc.ravel(), -B.ravel(),
                               B.ravel(), sp.eps * lap.ravel()])
        A = self._pattern.build(vals[self._keep])

        rhs = np.zeros(self.n_full)
        rhs[:2 * n] = np.concatenate([W * h_old * state.u[0].ravel(),
                                      W * h_old * state.u[1].ravel()]) / dt
        qi, qo, qw = self.bp.traces(grid, t_new)
        rhs[grid.inlet] += h1[0] * grid.w2 * qi
        rhs[grid.outlet] -= h1[-1] * grid.w2 * qo
        rhs[n + grid.wall] -= grid.w1 * qw
        return LinearSystem(A=A, rhs=rhs[self.free], free=self.free, n_full=self.n_full,
                            wall_rows=self.wall_rows, wall_weights=self.wall_weights)

    def unpack(self, x_free: np.ndarray, t_new: float, h: DeformationSnapshot) -> FlowState:
        """Scatter free unknowns; split the pressure into mean and zero-mean part."""
        grid = self.grid
        n = grid.size
        x = np.zeros(self.n_full)
        x[self.free] = x_free
        u = x[:2 * n].reshape((2,) + grid.shape)
        q = x[2 * n:].reshape(grid.shape)
        level = float(np.sum(grid.W * q) / np.sum(grid.W))
        return FlowState(u=u.copy(), q=q - level, t=t_new, q_level=level)

    def divergence(self, state: FlowState, h: DeformationSnapshot) -> np.ndarray:
        """Scheme-consistent nodal ``div_h`` of ``state.u``."""
        return weak_divergence(state.u, h, self.grid, self.kit)

    # -- stepping ---------------------------------------------------------
    def step(self, state: FlowState, wall: WallState, h_prev: DeformationSnapshot,
             h_next: DeformationSnapshot) -> FlowState:
        """Advance one step with the wall velocity ``wall.sigma`` held fixed."""
        t_new = state.t + self.sp.dt
        sys_ = self.assemble(state, h_prev, h_next, t_new)
        rhs = sys_.rhs.copy()
        rhs[sys_.wall_rows] += sys_.wall_weights * np.asarray(wall.sigma)[1:-1]
        x = solve_sparse(sys_.A, rhs, self.sp.tol, self.sp.max_iter, self.sp.direct_limit)
        return self.unpack(x, t_new, h_next)


def step_fluid(state: FlowState, wall: WallState, h_prev: DeformationSnapshot,
               h_next: DeformationSnapshot, bp: BoundaryPressures, sp: SchemeParams,
               grid: Grid2D, nu: float) -> FlowState:
    """Functional wrapper around :meth:`FluidStepper.step`."""
    return FluidStepper(grid, nu, bp, sp).step(state, wall, h_prev, h_next)
