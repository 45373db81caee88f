"""Implicit stepper for the clamped viscoelastic string.

The wall velocity ``sigma = eta_t`` solves

    sigma_t + c sigma'''' - a eta'' + b eta - a R0'' + (kappa/E)(sigma - u2) = 0

with ``eta = eta_old + dt * sigma`` carried explicitly. Clamped ends are
imposed through reflected ghost values (``eta_{-1} = eta_1``) so the
five-point fourth-difference operator stays symmetric positive definite.
Unknowns live on the interior nodes ``1 .. N-1``; end values are zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .errors import DimensionError, DomainError, SolverError

__all__ = [
    "WallState",
    "WallParams",
    "structural_factor",
    "fourth_difference",
    "second_difference",
    "wall_matrix",
    "wall_rhs",
    "step_wall",
    "wall_energy",
    "string_energy",
]


@dataclass
class WallState:
    """Wall displacement and velocity on the 1D nodes (ends held at zero)."""

    eta: np.ndarray
    sigma: np.ndarray
    t: float = 0.0

    @classmethod
    def zero(cls, n: int, t: float = 0.0) -> "WallState":
        return cls(np.zeros(n), np.zeros(n), t)

    def clamp_defect(self) -> float:
        return float(max(abs(self.eta[0]), abs(self.eta[-1]),
                         abs(self.sigma[0]), abs(self.sigma[-1])))


def structural_factor(rho: float, rho_w: float, hbar: float, R0_y1) -> np.ndarray:
    """Per-node factor ``E = rho * rho_w * hbar * sqrt(1 + R0'^2)``."""
    return rho * rho_w * hbar * np.sqrt(1.0 + np.asarray(R0_y1, dtype=float) ** 2)


@dataclass(frozen=True)
class WallParams:
    """String coefficients.

    Parameters
    ----------
    a, b, c : float
        Tension, spring and viscoelastic coefficients (positive).
    Estiff : ndarray
        Structural factor per node (positive).
    R0_y1y1 : ndarray
        Second derivative of the reference height per node.
    """

    a: float
    b: float
    c: float
    Estiff: np.ndarray
    R0_y1y1: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if np.any(np.asarray(self.Estiff) <= 0):
            raise DomainError("Estiff must be positive")
        if np.shape(self.Estiff) != np.shape(self.R0_y1y1):
            raise DimensionError("Estiff and R0_y1y1 must have the same length")

    @property
    def n(self) -> int:
        return int(np.size(self.Estiff))


def fourth_difference(n: int, dy: float) -> sps.csr_matrix:
    """Clamped fourth difference on the ``n - 2`` interior nodes of ``n``."""
    m = n - 2
    if m < 3:
        raise DimensionError("need at least 5 wall nodes")
    main = np.full(m, 6.0)
    main[[0, -1]] = 7.0  # reflected ghost eta_{-1} = eta_1
    diags = [main, np.full(m - 1, -4.0), np.full(m - 1, -4.0),
             np.ones(m - 2), np.ones(m - 2)]
    return sps.diags(diags, [0, 1, -1, 2, -2], format="csr") / dy**4


def second_difference(n: int, dy: float) -> sps.csr_matrix:
    """Negative second difference with zero end values (SPD)."""
    m = n - 2
    return sps.diags([np.full(m, 2.0), -np.ones(m - 1), -np.ones(m - 1)],
                     [0, 1, -1], format="csr") / dy**2


def wall_matrix(params: WallParams, kappa: float, dt: float, dy: float) -> sps.csr_matrix:
    """Interior-node system matrix for ``sigma`` (without the ``u2`` coupling)."""
    n = params.n
    E = np.asarray(params.Estiff)[1:-1]
    B = fourth_difference(n, dy)
    K = second_difference(n, dy)
    m = n - 2
    diag = np.full(m, 1.0 / dt) + params.b * dt + kappa / E
    return (sps.diags(diag) + params.c * B + params.a * dt * K).tocsr()


def wall_rhs(wall: WallState, params: WallParams, dt: float, dy: float) -> np.ndarray:
    """Interior right-hand side from the old state and the ``R0''`` forcing."""
    n = params.n
    K = second_difference(n, dy)
    eta = wall.eta[1:-1]
    return (wall.sigma[1:-1] / dt - params.a * (K @ eta) - params.b * eta
            + params.a * np.asarray(params.R0_y1y1)[1:-1])


def step_wall(wall: WallState, fluid_trace, params: WallParams, kappa: float, dt: float,
              dy: float) -> WallState:
    """One backward-Euler step of the string with penalty forcing.

    Parameters
    ----------
    wall : WallState
        State at the old time level.
    fluid_trace : ndarray
        Fluid normal velocity ``u2`` at the wall nodes (new time level).
    kappa, dt, dy : float
        Penalty, time step and node spacing.
    """
    n = params.n
    if wall.eta.shape != (n,) or np.shape(fluid_trace) != (n,):
        raise DimensionError("wall arrays must match the parameter length")
    if wall.clamp_defect() > 0.0:
        raise DomainError("input wall state violates the clamped end conditions")
    A = wall_matrix(params, kappa, dt, dy).toarray()
    E = np.asarray(params.Estiff)[1:-1]
    rhs = wall_rhs(wall, params, dt, dy) + kappa / E * np.asarray(fluid_trace)[1:-1]
    try:
        s = sla.solve(A, rhs, assume_a="pos")
    except np.linalg.LinAlgError as exc:  # not expected for positive coefficients
        raise SolverError(f"wall matrix is not positive definite: {exc}") from exc
    res = np.linalg.norm(A @ s - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > 1e-12:
        raise SolverError("wall solve residual above 1e-12", residual=res)
    sigma = np.zeros(n)
    sigma[1:-1] = s
    return WallState(wall.eta + dt * sigma, sigma, wall.t + dt)


def _edge_weights(E):
    E = np.asarray(E, dtype=float)
    return 0.5 * (E[1:] + E[:-1])


def string_energy(wall: WallState, params: WallParams, dy: float) -> float:
    """Unweighted energy ``1/2|sigma|^2 + a/2|eta'|^2 + b/2|eta|^2``."""
    w = np.full(params.n, dy)
    w[[0, -1]] *= 0.5
    de = np.diff(wall.eta) / dy
    return float(0.5 * np.sum(w * wall.sigma**2) + 0.5 * params.a * dy * np.sum(de**2)
                 + 0.5 * params.b * np.sum(w * wall.eta**2))


def wall_energy(wall: WallState, params: WallParams, dy: float) -> float:
    """``E/2 |sigma|^2 + aE/2 |eta'|^2 + bE/2 |eta|^2`` on the wall nodes.

    The slope uses edge differences, matching the clamped second difference
    of the stepper so the discrete energy balance is exact for constant E.
    """
    E = np.asarray(params.Estiff, dtype=float)
    w = np.full(params.n, dy)
    w[[0, -1]] *= 0.5
    de = np.diff(wall.eta) / dy
    return float(0.5 * np.sum(w * E * wall.sigma**2)
                 + 0.5 * params.a * dy * np.sum(_edge_weights(E) * de**2)
                 + 0.5 * params.b * np.sum(w * E * wall.eta**2))
