"""Wall shape, admissibility checks and pointwise transformation algebra.

The moving channel ``0 < x2 < h(y1, t)`` is mapped onto the reference
rectangle ``(0, L) x (0, 1)`` through ``x2 = y2 * h``. Everything in this
module is pointwise or acts on 1D wall samples; it holds no solver state.

Array conventions: velocity gradients are stored as ``grad[..., i, k] =
d u_i / d y_k`` (rows are components, columns are directions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .errors import DimensionError, DomainError

__all__ = [
    "ReferenceRadius",
    "DeformationSnapshot",
    "DeformationHistory",
    "AdmissibilityParams",
    "AdmissibilityReport",
    "PointValues",
    "PointVelocity",
    "PointTransformSet",
    "ErrorMatrixSet",
    "default_alpha",
    "eval_deformation",
    "check_admissible",
    "point_transforms",
    "error_matrices",
    "piola_apply",
    "fd_weights",
    "derivative_matrix",
]


# ---------------------------------------------------------------------------
# reference radius
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceRadius:
    """Undeformed wall height ``R0(y1)`` with its first two derivatives.

    Parameters
    ----------
    value, d1, d2 : callable
        Vectorized callables returning ``R0``, ``R0'`` and ``R0''``.
    label : str
        Canonical textual form, used when writing configurations.
    """

    value: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"

    @classmethod
    def constant(cls, r: float) -> "ReferenceRadius":
        r = float(r)
        zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))  # noqa: E731
        return cls(lambda y: np.full_like(np.asarray(y, dtype=float), r), zero, zero,
                   label=repr(r))

    @classmethod
    def sine(cls, r0: float, amp: float, length: float) -> "ReferenceRadius":
        """``R0 = r0 + amp * sin(pi y1 / L)``."""
        k = math.pi / length
        return cls(
            lambda y: r0 + amp * np.sin(k * np.asarray(y, dtype=float)),
            lambda y: amp * k * np.cos(k * np.asarray(y, dtype=float)),
            lambda y: -amp * k * k * np.sin(k * np.asarray(y, dtype=float)),
            label=f"sine({r0!r}, {amp!r})",
        )

    @classmethod
    def from_samples(cls, y, r) -> "ReferenceRadius":
        """Cubic spline through samples (C2 by construction)."""
        spl = CubicSpline(np.asarray(y, float), np.asarray(r, float), bc_type="natural")
        return cls(spl, spl.derivative(1), spl.derivative(2), label="samples")

    def bounds(self, length: float, n: int = 2001):
        """Return ``(R_min, R_max)`` sampled on a fine grid."""
        vals = self.value(np.linspace(0.0, length, n))
        return float(vals.min()), float(vals.max())


# ---------------------------------------------------------------------------
# finite-difference helpers
# ---------------------------------------------------------------------------

def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative.

    Solves the moment conditions ``sum_k w_k o_k^m / m! = [m == order]`` for
    unit spacing; divide by ``dx**order`` afterwards.
    """
    o = np.asarray(offsets, dtype=float)
    m = np.arange(o.size)
    vander = o[None, :] ** m[:, None] / np.array([math.factorial(k) for k in m])[:, None]
    rhs = np.zeros(o.size)
    rhs[order] = 1.0
    return np.linalg.solve(vander, rhs)


def derivative_matrix(n: int, dx: float, order: int = 1, accuracy: int = 4) -> np.ndarray:
    """Dense 1D differentiation matrix on ``n`` uniform nodes.

    Centered stencils in the interior, stencils shifted inside the domain
    near the ends (one extra point for the second derivative so the one-sided
    rows keep the formal accuracy).
    """
    width = accuracy + 1 if order == 1 else accuracy + 1
    edge_width = width if order == 1 else width + 1
    if n < edge_width:
        raise DimensionError(f"need at least {edge_width} nodes, got {n}")
    half = width // 2
    D = np.zeros((n, n))
    for i in range(n):
        if half <= i < n - half:
            offs = np.arange(-half, half + 1)
        elif i < half:
            offs = np.arange(edge_width) - i
        else:
            offs = np.arange(-edge_width + 1, 1) + (n - 1 - i)
        D[i, i + offs] = fd_weights(offs, order)
    return D / dx**order


# ---------------------------------------------------------------------------
# deformation history
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeformationSnapshot:
    """Wall height and derivatives at one time level (1D arrays over y1)."""

    y1: np.ndarray
    t: float
    h: np.ndarray
    h_y1: np.ndarray
    h_y1y1: np.ndarray
    h_t: np.ndarray
    h_ty1: np.ndarray

    @classmethod
    def flat(cls, y1, value: float = 1.0, t: float = 0.0) -> "DeformationSnapshot":
        y1 = np.asarray(y1, dtype=float)
        z = np.zeros_like(y1)
        return cls(y1, t, np.full_like(y1, value), z, z, z, z)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DeformationHistory:
    """Wall height ``h = R0 + delta`` sampled on the 1D grid and time levels.

    All arrays have shape ``(n_times, n_nodes)`` and are read-only.
    """

    y1: np.ndarray
    t: np.ndarray
    h: np.ndarray
    h_y1: np.ndarray
    h_y1y1: np.ndarray
    h_t: np.ndarray
    h_ty1: np.ndarray
    R0: np.ndarray = field(repr=False)
    R0_y1: np.ndarray = field(repr=False)
    R0_y1y1: np.ndarray = field(repr=False)

    @property
    def n_times(self) -> int:
        return self.t.size

    def snapshot(self, n: int) -> DeformationSnapshot:
        return DeformationSnapshot(self.y1, float(self.t[n]), self.h[n], self.h_y1[n],
                                   self.h_y1y1[n], self.h_t[n], self.h_ty1[n])

    def centered_slope_defect(self) -> float:
        """Max difference between ``h_y1`` and a centered difference of ``h``.

        Interior nodes only; it is ``O(dy1**2)`` for consistent data.
        """
        dy = self.y1[1] - self.y1[0]
        cd = (self.h[:, 2:] - self.h[:, :-2]) / (2 * dy)
        return float(np.max(np.abs(cd - self.h_y1[:, 1:-1]))) if cd.size else 0.0


def eval_deformation(delta, R0: ReferenceRadius, y1, times, derivatives=None,
                     clamped: Optional[bool] = None) -> DeformationHistory:
    """Build ``h = R0 + delta`` and its derivative arrays.

    Parameters
    ----------
    delta : array_like, shape (n_times, n_nodes), or callable
        Wall displacement samples, or ``delta(Y1, T)`` evaluated on the mesh.
    R0 : ReferenceRadius
        Reference height; its derivatives are used analytically.
    y1, times : array_like
        Node coordinates and time levels.
    derivatives : callable, optional
        ``derivatives(Y1, T) -> dict`` with keys ``y1, y1y1, t, ty1`` giving
        exact derivatives of delta. Without it, space derivatives use
        fourth-order differences and time derivatives second-order ones.
    clamped : bool, optional
        Force the end slopes of delta (and their time derivatives) to zero.
        Detected automatically from vanishing end values when omitted.

    Returns
    -------
    DeformationHistory
    """
    y1 = np.asarray(y1, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    T, Y = np.meshgrid(times, y1, indexing="ij")
    d = delta(Y, T) if callable(delta) else np.asarray(delta, dtype=float)
    d = np.broadcast_to(d, Y.shape) if np.ndim(d) == 0 else d
    if d.shape != Y.shape:
        raise DimensionError(f"delta has shape {d.shape}, expected {Y.shape}")

    if derivatives is not None:
        der = derivatives(Y, T)
        d_y, d_yy, d_t, d_ty = (np.broadcast_to(np.asarray(der[k], float), Y.shape)
                                for k in ("y1", "y1y1", "t", "ty1"))
    else:
        dy = y1[1] - y1[0]
        D1 = derivative_matrix(y1.size, dy, 1)
        D2 = derivative_matrix(y1.size, dy, 2)
        d_y = d @ D1.T
        d_yy = d @ D2.T
        if times.size >= 3:
            d_t = np.gradient(d, times, axis=0, edge_order=2)
        elif times.size == 2:
            d_t = np.repeat((d[1:] - d[:1]) / (times[1] - times[0]), 2, axis=0)
        else:
            d_t = np.zeros_like(d)
        d_ty = d_t @ D1.T
        if clamped is None:
            scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
            clamped = bool(np.all(np.abs(d[:, [0, -1]]) <= 1e-14 * scale))
        if clamped:
            d_y = d_y.copy()
            d_ty = d_ty.copy()
            d_y[:, [0, -1]] = 0.0
            d_ty[:, [0, -1]] = 0.0

    r = R0.value(y1)
    r1 = R0.d1(y1)
    r2 = R0.d2(y1)
    return DeformationHistory(
        y1=_frozen(y1), t=_frozen(times),
        h=_frozen(r[None, :] + d), h_y1=_frozen(r1[None, :] + d_y),
        h_y1y1=_frozen(r2[None, :] + d_yy), h_t=_frozen(d_t), h_ty1=_frozen(d_ty),
        R0=_frozen(r), R0_y1=_frozen(r1), R0_y1y1=_frozen(r2),
    )


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

def default_alpha(R_min: float, R_max: float, margin: float = 0.1) -> float:
    """Lower-bound parameter ``margin`` below ``min(R_min, 1/(R_min+R_max))``."""
    return (1.0 - margin) * min(R_min, 1.0 / (R_min + R_max))


@dataclass(frozen=True)
class AdmissibilityParams:
    """Bounds that keep the wall away from the bottom and control its slope.

    Parameters
    ----------
    alpha : float
        Requires ``alpha <= h <= 1/alpha``; must lie in (0, 1).
    K : float
        Bound on ``|h_y1| + int |h_t|^2 dt`` per node.
    R_min, R_max : float, optional
        Bounds of the reference height, used for the choice rule of alpha
        and for the radius of the iteration ball.
    T_max : float
        Largest admissible final time (``inf`` disables the check).
    """

    alpha: float
    K: float
    R_min: Optional[float] = None
    R_max: Optional[float] = None
    T_max: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.K > 0.0:
            raise DomainError(f"K must be positive, got {self.K}")

    @property
    def alpha_rule_ok(self) -> bool:
        """True when ``alpha < min(R_min, 1/(R_min + R_max))`` (or bounds unknown)."""
        if self.R_min is None or self.R_max is None:
            return True
        return self.alpha < min(self.R_min, 1.0 / (self.R_min + self.R_max))

    @property
    def ball_radius(self) -> float:
        """Radius ``R_min - alpha`` of the iteration ball (inf if unknown)."""
        return math.inf if self.R_min is None else self.R_min - self.alpha


@dataclass
class AdmissibilityReport:
    """Outcome of :func:`check_admissible`; failures are data, not errors."""

    passed: bool
    bounds_ok: bool
    slope_ok: bool
    h_min: float
    h_max: float
    argmin: tuple
    argmax: tuple
    slope_speed_max: float
    slope_speed_node: int
    violations: list

    def summary(self) -> str:
        if self.passed:
            return "admissible"
        return "; ".join(v["message"] for v in self.violations)


def check_admissible(h: DeformationHistory, params: AdmissibilityParams) -> AdmissibilityReport:
    """Check ``alpha <= h <= 1/alpha`` and the slope-plus-speed bound ``K``.

    The time integral of ``h_t**2`` uses the trapezoidal rule. Both bounds
    are non-strict.
    """
    H = np.asarray(h.h)
    lo, hi = params.alpha, 1.0 / params.alpha
    imin = np.unravel_index(np.argmin(H), H.shape)
    imax = np.unravel_index(np.argmax(H), H.shape)
    violations = []
    if H[imin] < lo:
        violations.append({"kind": "lower", "node": int(imin[1]), "time_index": int(imin[0]),
                           "value": float(H[imin]),
                           "message": f"h = {H[imin]:.6g} < alpha = {lo:.6g} at node {imin[1]}, "
                                      f"time index {imin[0]}"})
    if H[imax] > hi:
        violations.append({"kind": "upper", "node": int(imax[1]), "time_index": int(imax[0]),
                           "value": float(H[imax]),
                           "message": f"h = {H[imax]:.6g} > 1/alpha = {hi:.6g} at node {imax[1]}, "
                                      f"time index {imax[0]}"})
    bounds_ok = not violations

    if h.t.size > 1:
        speed = trapezoid(np.asarray(h.h_t) ** 2, h.t, axis=0)
    else:
        speed = np.zeros(H.shape[1])
    slope = np.max(np.abs(h.h_y1), axis=0)
    total = slope + speed
    node = int(np.argmax(total))
    slope_ok = bool(total[node] <= params.K)
    if not slope_ok:
        violations.append({"kind": "slope", "node": node, "time_index": -1,
                           "value": float(total[node]),
                           "message": f"|h_y1| + int h_t^2 = {total[node]:.6g} > K = {params.K:.6g} "
                                      f"at node {node}"})
    if h.t[-1] > params.T_max:
        violations.append({"kind": "time", "node": -1, "time_index": h.t.size - 1,
                           "value": float(h.t[-1]),
                           "message": f"final time {h.t[-1]:.6g} > T_max = {params.T_max:.6g}"})
    return AdmissibilityReport(
        passed=not violations, bounds_ok=bounds_ok, slope_ok=slope_ok,
        h_min=float(H[imin]), h_max=float(H[imax]),
        argmin=(int(imin[1]), int(imin[0])), argmax=(int(imax[1]), int(imax[0])),
        slope_speed_max=float(total[node]), slope_speed_node=node, violations=violations,
    )


# ---------------------------------------------------------------------------
# pointwise transforms between two deformations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointValues:
    """Pointwise wall data; fields broadcast as numpy arrays."""

    h: np.ndarray
    h_y1: np.ndarray = 0.0
    h_y1y1: np.ndarray = 0.0
    h_t: np.ndarray = 0.0
    h_ty1: np.ndarray = 0.0

    @classmethod
    def coerce(cls, v) -> "PointValues":
        if isinstance(v, cls):
            return v
        if isinstance(v, dict):
            return cls(**v)
        return cls(h=v)


@dataclass(frozen=True)
class PointVelocity:
    """Velocity value ``u[..., i]`` and gradient ``grad[..., i, k] = d_k u_i``."""

    u: np.ndarray
    grad: np.ndarray


@dataclass(frozen=True)
class PointTransformSet:
    J: np.ndarray
    Jinv: np.ndarray
    R: np.ndarray
    Rinv: np.ndarray
    F_h: np.ndarray
    detJ: np.ndarray


@dataclass(frozen=True)
class ErrorMatrixSet:
    E1: np.ndarray
    E2: np.ndarray
    E3: np.ndarray
    E_R: np.ndarray
    wE: np.ndarray
    E: np.ndarray


def _mat(a00, a01, a10, a11) -> np.ndarray:
    a00, a01, a10, a11 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a00, a01, a10, a11)))
    out = np.empty(a00.shape + (2, 2))
    out[..., 0, 0] = a00
    out[..., 0, 1] = a01
    out[..., 1, 0] = a10
    out[..., 1, 1] = a11
    return out


def _check_positive(*hs):
    for v in hs:
        if np.any(np.asarray(v.h) <= 0.0):
            raise DomainError("heights must be positive")


def _ratio_slope_scaled(p1: PointValues, p2: PointValues):
    """``wE = h2 * d_y1(h1/h2)`` via the difference form, and ``hbar``."""
    hbar = np.asarray(p1.h) - np.asarray(p2.h)
    hbar_y = np.asarray(p1.h_y1) - np.asarray(p2.h_y1)
    wE = (p1.h * hbar_y - p1.h_y1 * hbar) / p2.h
    return wE, hbar, hbar_y


def metric_factor(h, h_y1, y2) -> np.ndarray:
    """``F_h = 1/2 [[1, 0], [-y2 h_y1 / h, 1 / h]]`` so that ``e_h(u) = grad u F_h + (.)^T``."""
    h = np.asarray(h, dtype=float)
    return 0.5 * _mat(1.0, 0.0, -np.asarray(y2) * h_y1 / h, 1.0 / h)


def point_transforms(h1, h2, y2) -> PointTransformSet:
    """Transformation matrices from the ``h1`` domain to the ``h2`` domain.

    Parameters
    ----------
    h1, h2 : PointValues or dict
        Values ``h`` and ``h_y1`` of both deformations at the point(s).
    y2 : float or array
        Reference ordinate.
    """
    p1, p2 = PointValues.coerce(h1), PointValues.coerce(h2)
    _check_positive(p1, p2)
    y2 = np.asarray(y2, dtype=float)
    wE, _, _ = _ratio_slope_scaled(p1, p2)
    r = np.asarray(p1.h / p2.h, dtype=float)
    J = _mat(1.0, 0.0, y2 * wE, r)
    Jinv = _mat(1.0, 0.0, -y2 * wE * p2.h / p1.h, 1.0 / r)
    R = _mat(r, 0.0, -y2 * wE, 1.0)
    Rinv = _mat(1.0 / r, 0.0, y2 * wE * p2.h / p1.h, 1.0)
    F = metric_factor(p1.h, p1.h_y1, y2)
    return PointTransformSet(J=J, Jinv=Jinv, R=R, Rinv=Rinv, F_h=F, detJ=np.broadcast_to(r, R.shape[:-2]).copy())


def error_matrices(h1, h2, u: PointVelocity, y2) -> ErrorMatrixSet:
    """Error terms produced when a velocity is moved from ``h1`` to ``h2``.

    ``E1`` corrects the distributive time derivative, ``E2`` the gradient of
    the transformed velocity, ``E3`` the metric factor and ``E_R = R - I``.
    ``E`` is the combination entering the deformation-tensor identity.
    """
    p1, p2 = PointValues.coerce(h1), PointValues.coerce(h2)
    _check_positive(p1, p2)
    y2 = np.asarray(y2, dtype=float)
    v = np.asarray(u.u, dtype=float)
    g = np.asarray(u.grad, dtype=float)
    v1, v2 = v[..., 0], v[..., 1]
    v1_y1, v1_y2, v2_y2 = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]

    wE, hbar, hbar_y = _ratio_slope_scaled(p1, p2)
    P = p2.h * wE
    hbar_yy = np.asarray(p1.h_y1y1) - np.asarray(p2.h_y1y1)
    wE_y = ((p1.h * hbar_yy - p1.h_y1y1 * hbar) - p2.h_y1 / p2.h * P) / p2.h
    hbar_t = np.asarray(p1.h_t) - np.asarray(p2.h_t)
    hbar_ty = np.asarray(p1.h_ty1) - np.asarray(p2.h_ty1)
    P_t = p1.h_t * hbar_y + p1.h * hbar_ty - p1.h_ty1 * hbar - p1.h_y1 * hbar_t
    wE_t = (P_t - P * p2.h_t / p2.h) / p2.h

    rate = p1.h_t / p1.h - p2.h_t / p2.h
    e1_0 = rate * p1.h * (v1 + y2 * v1_y2)
    e1_1 = rate * y2 * p2.h * (v2_y2 - y2 * wE * v1_y2) + y2 * v1 * (p2.h_t * wE - p2.h * wE_t)
    E1 = np.stack(np.broadcast_arrays(e1_0, e1_1), axis=-1)

    E2 = _mat(v1 * wE / p2.h + hbar / p2.h * v1_y1, hbar / p2.h * v1_y2,
              -y2 * (wE_y * v1 + wE * v1_y1), -wE * (v1 + y2 * v1_y2))
    # second diagonal entry is 1/h2 - 1/h1 so that F_{h2} = F_{h1} + E3 holds
    E3 = 0.5 * _mat(0.0, 0.0, y2 * wE / p1.h, 1.0 / p2.h - 1.0 / p1.h)
    E_R = _mat(hbar / p2.h, 0.0, -y2 * wE, 0.0)
    F1 = metric_factor(p1.h, p1.h_y1, y2)
    E = E2 @ F1 + E2 @ E3 + g @ E3
    return ErrorMatrixSet(E1=E1, E2=E2, E3=E3, E_R=E_R, wE=np.asarray(wE), E=E)


def piola_apply(u, transforms: PointTransformSet) -> np.ndarray:
    """Return ``R u`` pointwise (``u[..., 2]``)."""
    return np.einsum("...ij,...j->...i", transforms.R, np.asarray(u, dtype=float))
