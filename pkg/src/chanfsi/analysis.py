"""Numerical checks of the transformation identities, the Korn constant,
the continuous-dependence functionals and the integral equicontinuity bound.

Pointwise identities are evaluated on random smooth data with exact
derivatives, so their residuals measure formula errors only. Integral
identities are checked through grid-refinement studies.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .config import ModelConfig
from .coupling import CoupledModel, Trajectory
from .errors import DimensionError, DomainError, SolverError
from .fluid import BoundaryPressures
from .geometry import (PointValues, PointVelocity, error_matrices, metric_factor, piola_apply,
                       point_transforms)
from .operators import (Grid2D, convective_form, def_tensor_factorized, def_tensor_field,
                        div_h_field, gradient, q1_h1_gram, q1_viscous_matrix,
                        skew_convective_form)

__all__ = [
    "IdentityResult",
    "ConsistencyResult",
    "DependenceReport",
    "EquicontinuityProfile",
    "IDENTITY_KINDS",
    "verify_identity",
    "consistency_study",
    "korn_constant",
    "dependence_experiment",
    "equicontinuity_profile",
]

IDENTITY_KINDS = ("piola", "viscous_transform", "grad_R", "trilinear_skew", "essup")


@dataclass
class IdentityResult:
    kind: str
    max_residual: float
    mean_residual: float
    count: int
    details: dict = field(default_factory=dict)


@dataclass
class ConsistencyResult:
    """Errors on a sequence of grids and the fitted log-log slope."""

    kind: str
    N: list
    errors: list
    order: float


# ---------------------------------------------------------------------------
# random smooth analytic data
# ---------------------------------------------------------------------------

class _Height:
    """``h = c0 + c1 sin(k1 y + p1) + c2 cos(k2 y + p2)`` with exact derivatives."""

    def __init__(self, rng, size):
        self.c0 = rng.uniform(1.0, 2.0, size)
        self.c1 = rng.uniform(-0.2, 0.2, size)
        self.c2 = rng.uniform(-0.2, 0.2, size)
        self.k1 = rng.uniform(0.5, 3.0, size)
        self.k2 = rng.uniform(0.5, 3.0, size)
        self.p1 = rng.uniform(0.0, 2 * np.pi, size)
        self.p2 = rng.uniform(0.0, 2 * np.pi, size)

    def derivs(self, y):
        a, b = self.k1 * y + self.p1, self.k2 * y + self.p2
        h = self.c0 + self.c1 * np.sin(a) + self.c2 * np.cos(b)
        h1 = self.c1 * self.k1 * np.cos(a) - self.c2 * self.k2 * np.sin(b)
        h2 = -self.c1 * self.k1**2 * np.sin(a) - self.c2 * self.k2**2 * np.cos(b)
        return h, h1, h2


class _Velocity:
    """``v_i = a_i sin(b_i y1 + c_i y2 + d_i) + e_i y1 y2`` with exact gradient."""

    def __init__(self, rng, size):
        shape = (size, 2)
        self.a = rng.uniform(-1, 1, shape)
        self.b = rng.uniform(-2, 2, shape)
        self.c = rng.uniform(-2, 2, shape)
        self.d = rng.uniform(0, 2 * np.pi, shape)
        self.e = rng.uniform(-1, 1, shape)

    def eval(self, y1, y2):
        y1, y2 = y1[:, None], y2[:, None]
        arg = self.b * y1 + self.c * y2 + self.d
        v = self.a * np.sin(arg) + self.e * y1 * y2
        grad = np.empty(v.shape + (2,))
        grad[..., 0] = self.a * self.b * np.cos(arg) + self.e * y2
        grad[..., 1] = self.a * self.c * np.cos(arg) + self.e * y1
        return v, grad


def _sample(count, seed):
    rng = np.random.default_rng(seed)
    y1 = rng.uniform(0.0, 2.0, count)
    y2 = rng.uniform(0.0, 1.0, count)
    h1 = _Height(rng, count).derivs(y1)
    h2 = _Height(rng, count).derivs(y1)
    v, grad = _Velocity(rng, count).eval(y1, y2)
    return y1, y2, h1, h2, v, grad


def _exact_grad_Rv(y2, h1, h2, v, grad):
    """``grad(R v)`` from the product rule with exact derivatives of ``R``."""
    a, a1, a2 = h1
    b, b1, b2 = h2
    r = a / b
    r1 = (a1 * b - a * b1) / b**2
    r2 = ((a2 * b - a * b2) * b - 2.0 * (a1 * b - a * b1) * b1) / b**3
    wE = b * r1
    wE_y = b1 * r1 + b * r2
    R = np.zeros(r.shape + (2, 2))
    R[..., 0, 0] = r
    R[..., 1, 0] = -y2 * wE
    R[..., 1, 1] = 1.0
    dR = np.zeros(r.shape + (2, 2, 2))  # [.., i, j, k] = d_k R_ij
    dR[..., 0, 0, 0] = r1
    dR[..., 1, 0, 0] = -y2 * wE_y
    dR[..., 1, 0, 1] = -wE
    return np.einsum("nijk,nj->nik", dR, v) + np.einsum("nij,njk->nik", R, grad)


def _div_h(grad, h, h_y1, y2):
    return grad[..., 0, 0] - y2 * h_y1 / h * grad[..., 0, 1] + grad[..., 1, 1] / h


def _pointwise(kind, count, seed, same_height=False):
    y1, y2, h1, h2, v, grad = _sample(count, seed)
    if same_height:
        h2 = h1
    p1 = PointValues(h=h1[0], h_y1=h1[1], h_y1y1=h1[2])
    p2 = PointValues(h=h2[0], h_y1=h2[1], h_y1y1=h2[2])
    tr = point_transforms(p1, p2, y2)
    gRv = _exact_grad_Rv(y2, h1, h2, v, grad)
    if kind == "piola":
        lhs = _div_h(gRv, h2[0], h2[1], y2)
        rhs = tr.detJ * _div_h(grad, h1[0], h1[1], y2)
        # the transformed field itself must agree with the public helper
        Rv = np.stack([h1[0] / h2[0] * v[:, 0],
                       v[:, 1] - y2 * (h1[1] - h2[1] * h1[0] / h2[0]) * v[:, 0]], axis=-1)
        return np.abs(lhs - rhs) + np.abs(piola_apply(v, tr) - Rv).max(axis=-1)
    em = error_matrices(p1, p2, PointVelocity(v, grad), y2)
    if kind == "grad_R":
        return np.abs(gRv - (grad + em.E2)).max(axis=(-1, -2))
    # viscous_transform: e_{h1}(v) = e_{h2}(Rv) - (E + E^T)
    F1 = metric_factor(h1[0], h1[1], y2)
    F2 = metric_factor(h2[0], h2[1], y2)
    sym = lambda M: M + np.swapaxes(M, -1, -2)  # noqa: E731
    lhs = sym(grad @ F1)
    rhs = sym(gRv @ F2) - sym(em.E)
    return np.abs(lhs - rhs).max(axis=(-1, -2))


# ---------------------------------------------------------------------------
# manufactured fields for refinement studies
# ---------------------------------------------------------------------------

def _mf_height(L, s=0.15):
    """Clamped deformation of a unit reference height."""
    k = 2 * np.pi / L
    h = lambda y: 1.0 + s * (1 - np.cos(k * y))  # noqa: E731
    h1 = lambda y: s * k * np.sin(k * y)  # noqa: E731
    return h, h1


def _mf_div_free(grid: Grid2D, h, h1):
    """``div_h``-free field from ``psi = A(y1) B(y2)`` that also lies in V.

    ``u1 = psi_y2 / h`` and ``u2 = -psi_y1 + y2 h_y1 psi_y2 / h`` with
    ``A = 2 + cos(pi y1/L)`` and ``B = sin(pi y2/2)``.
    """
    L = grid.L
    Y1, Y2 = np.meshgrid(grid.y1, grid.y2, indexing="ij")
    A = 2 + np.cos(np.pi * Y1 / L)
    A1 = -np.pi / L * np.sin(np.pi * Y1 / L)
    B = np.sin(0.5 * np.pi * Y2)
    B1 = 0.5 * np.pi * np.cos(0.5 * np.pi * Y2)
    hv, hy = h(Y1), h1(Y1)
    return np.stack([A * B1 / hv, -A1 * B + Y2 * hy * A * B1 / hv])


def _mf_test_fields(grid: Grid2D):
    """Two smooth fields in V (u1 = 0 on the wall, u2 = 0 on the other sides)."""
    L = grid.L
    Y1, Y2 = np.meshgrid(grid.y1, grid.y2, indexing="ij")
    z = np.stack([(1 + 0.5 * np.sin(Y1)) * np.cos(0.5 * np.pi * Y2),
                  np.sin(np.pi * Y1 / L) * np.sin(0.5 * np.pi * Y2) * (1 + Y1)])
    psi = np.stack([np.exp(-Y1 / L) * (1 - Y2**2) * (1 + Y2),
                    np.sin(2 * np.pi * Y1 / L) * Y2 * np.cos(Y2)])
    return z, psi


def _mf_exact_def_tensor(grid: Grid2D, h, h1):
    """Field ``u = (sin y1 cos y2, y1 y2^2)`` and its exact ``e_h`` by factorization."""
    Y1, Y2 = np.meshgrid(grid.y1, grid.y2, indexing="ij")
    u = np.stack([np.sin(Y1) * np.cos(Y2), Y1 * Y2**2])
    G = np.empty(Y1.shape + (2, 2))
    G[..., 0, 0] = np.cos(Y1) * np.cos(Y2)
    G[..., 0, 1] = -np.sin(Y1) * np.sin(Y2)
    G[..., 1, 0] = Y2**2
    G[..., 1, 1] = 2 * Y1 * Y2
    F = metric_factor(h(Y1), h1(Y1), Y2)
    GF = G @ F
    return u, GF + np.swapaxes(GF, -1, -2)


def _l2(f, grid):
    f = np.asarray(f)
    extra = tuple(range(2, f.ndim))
    sq = (f**2).sum(axis=extra) if extra else f**2
    return float(np.sqrt(np.sum(grid.W * sq)))


def consistency_study(kind: str, Ns: Sequence[int] = (16, 32, 64), L: float = 2.0) -> ConsistencyResult:
    """Refinement study of a discrete identity on ``2N x N`` grids.

    Kinds
    -----
    ``div_h``: L2 norm of ``div_h_field`` of a manufactured ``div_h``-free field.
    ``trilinear_skew``: ``b_h(u, z, psi) - skew form`` for ``div_h``-free ``u``.
    ``def_tensor``: L2 error of ``def_tensor_field`` against the exact tensor.
    ``factorization``: nodal gap between ``e_h`` and ``grad u F_h + (.)^T``
    with the same discrete gradient (rounding level, no order expected).
    """
    h, h1 = _mf_height(L)
    errs = []
    for N in Ns:
        g = Grid2D(L, 2 * N, N)
        snap = (h(g.y1), h1(g.y1))
        if kind == "div_h":
            errs.append(_l2(div_h_field(_mf_div_free(g, h, h1), snap, g), g))
        elif kind == "trilinear_skew":
            u = _mf_div_free(g, h, h1)
            z, psi = _mf_test_fields(g)
            b = convective_form(u, z, psi, snap, g, R0_in=float(h(0.0)), R0_out=float(h(L)))
            errs.append(abs(b - skew_convective_form(u, z, psi, snap, g)))
        elif kind == "def_tensor":
            u, exact = _mf_exact_def_tensor(g, h, h1)
            errs.append(_l2(def_tensor_field(u, snap, g) - exact, g))
        elif kind == "factorization":
            u, _ = _mf_exact_def_tensor(g, h, h1)
            errs.append(float(np.max(np.abs(def_tensor_field(u, snap, g)
                                            - def_tensor_factorized(u, snap, g)))))
        else:
            raise DomainError(f"unknown consistency kind '{kind}'")
    e = np.asarray(errs)
    if np.all(e > 0):
        order = float(-np.polyfit(np.log(np.asarray(Ns, float)), np.log(e), 1)[0])
    else:
        order = math.nan
    return ConsistencyResult(kind, list(Ns), [float(x) for x in errs], order)


def _essup_ratios(count, seed, n=101):
    """``sup_y1 int |v|^2 dy2 / (|v| |grad v|)`` for random fields of ``V_div`` (flat h)."""
    rng = np.random.default_rng(seed)
    L = 2.0
    g = Grid2D(L, 2 * (n - 1), n - 1)
    Y1, Y2 = np.meshgrid(g.y1, g.y2, indexing="ij")
    W, w2 = g.W, g.w2
    out = []
    for _ in range(count):
        # psi = A(y1) B(y2), A' = 0 at both ends, B(0) = 0, B'(1) = 0
        ka = rng.integers(1, 4)
        kb = 2 * rng.integers(0, 3) + 1
        c = rng.uniform(1.2, 3.0)
        A = c + np.cos(ka * np.pi * Y1 / L)
        A1 = -ka * np.pi / L * np.sin(ka * np.pi * Y1 / L)
        A2 = -(ka * np.pi / L) ** 2 * np.cos(ka * np.pi * Y1 / L)
        w = 0.5 * kb * np.pi
        B, B1, B2 = np.sin(w * Y2), w * np.cos(w * Y2), -w * w * np.sin(w * Y2)
        v = np.stack([A * B1, -A1 * B])
        G = np.stack([np.stack([A1 * B1, A * B2]), np.stack([-A2 * B, -A1 * B1])])
        col = (v**2).sum(axis=0) @ w2
        vn = math.sqrt(float(np.sum(W * (v**2).sum(axis=0))))
        gn = math.sqrt(float(np.sum(W * (G**2).sum(axis=(0, 1)))))
        out.append(float(col.max()) / (vn * gn))
    return np.asarray(out)


def verify_identity(kind: str, count: int = 100, seed: Optional[int] = 0,
                    same_height: bool = False) -> IdentityResult:
    """Residual statistics of one identity.

    ``piola``, ``viscous_transform`` and ``grad_R`` are pointwise and use
    ``count`` random samples; ``same_height`` uses one deformation for
    both sides. ``trilinear_skew`` runs a refinement study and reports
    the fitted order in ``details``. ``essup`` reports the trace ratios,
    which are bounded but have no reference value.
    """
    if kind in ("piola", "viscous_transform", "grad_R"):
        res = _pointwise(kind, count, seed, same_height)
        return IdentityResult(kind, float(res.max()), float(res.mean()), count)
    if kind == "trilinear_skew":
        cr = consistency_study("trilinear_skew")
        return IdentityResult(kind, max(cr.errors), float(np.mean(cr.errors)), len(cr.N),
                              {"N": cr.N, "errors": cr.errors, "order": cr.order})
    if kind == "essup":
        r = _essup_ratios(count, seed)
        return IdentityResult(kind, float(r.max()), float(r.mean()), count,
                              {"ratios": r.tolist()})
    raise DomainError(f"unknown identity kind '{kind}'; choose from {', '.join(IDENTITY_KINDS)}")


# ---------------------------------------------------------------------------
# Korn constant
# ---------------------------------------------------------------------------

def korn_constant(h, grid: Grid2D, extra_fixed=None) -> float:
    """Smallest generalized eigenvalue of the viscous form (unit viscosity)
    against the ``H^1`` seminorm Gram matrix on the discrete space V.

    Parameters
    ----------
    h : DeformationSnapshot, (h, h_y1) tuple or float
    grid : Grid2D
        At most 24 cells per direction (dense eigensolve).
    extra_fixed : array_like of int, optional
        Further velocity unknowns (indices into ``[u1; u2]``) held at zero.
    """
    if grid.N1 > 24 or grid.N2 > 24:
        raise DimensionError("korn_constant needs at most 24 cells per direction")
    n = grid.size
    fixed = np.zeros(2 * n, dtype=bool)
    fixed[grid.wall] = True
    for idx in (grid.inlet, grid.outlet, grid.center):
        fixed[n + idx] = True
    if extra_fixed is not None:
        fixed[np.asarray(extra_fixed, dtype=int)] = True
    free = np.flatnonzero(~fixed)
    A = q1_viscous_matrix(grid, h, 1.0)[free][:, free].toarray()
    B = q1_h1_gram(grid)[free][:, free].toarray()
    try:
        lam = sla.eigh(0.5 * (A + A.T), B, eigvals_only=True, subset_by_index=[0, 0])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"generalized eigensolve failed: {exc}") from exc
    return float(lam[0])


def _coarse_korn(model: CoupledModel, hist, levels=(0, -1)) -> float:
    """Korn constant on a grid of at most 24 cells, minimized over some time levels."""
    g = model.grid
    cg = Grid2D(g.L, min(g.N1, 24), min(g.N2, 24))
    vals = []
    for n in levels:
        hv = np.interp(cg.y1, g.y1, hist.h[n])
        hy = np.interp(cg.y1, g.y1, hist.h_y1[n])
        vals.append(korn_constant((hv, hy), cg))
    return min(vals)


# ---------------------------------------------------------------------------
# continuous dependence
# ---------------------------------------------------------------------------

@dataclass
class DependenceReport:
    """Left and right sides of the continuous-dependence estimate over time.

    ``lhs`` collects the energy of ``R u1 - u2`` and of the wall differences;
    ``rhs_data`` the pressure-difference integral and ``rhs_deformation`` the
    term ``omega(t) [|hbar|^2_{W1,inf L2} + |hbar|^2_{L inf H2}]``.
    ``ratio = lhs / (rhs_data + rhs_deformation)`` (zero where both vanish).
    """

    kind: str
    amplitude: float
    t: np.ndarray
    lhs: np.ndarray
    rhs_data: np.ndarray
    rhs_deformation: np.ndarray
    omega: np.ndarray
    ratio: np.ndarray
    c_korn: float
    terms: dict = field(default_factory=dict)

    @property
    def rhs(self) -> np.ndarray:
        return self.rhs_data + self.rhs_deformation

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratio))


class _Perturbed:
    """``base(coord, t) + s * shape(coord, t)`` as a boundary-pressure callable."""

    def __init__(self, base, shape, s):
        self.base, self.shape, self.s = base, shape, s

    def __call__(self, coord, t):
        return np.asarray(self.base(coord, t), float) + self.s * np.asarray(self.shape(coord, t), float)


def _cumtrapz(f, t):
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def _wall_norms(f, dy):
    """Trapezoidal ``L2``, ``H1`` seminorm and clamped ``H2`` seminorm parts per row."""
    w = np.full(f.shape[-1], dy)
    w[[0, -1]] *= 0.5
    l2 = (f**2) @ w
    d1 = np.sum((np.diff(f, axis=-1) / dy) ** 2, axis=-1) * dy
    pad = np.concatenate([f[..., 1:2], f, f[..., -2:-1]], axis=-1)
    d2 = ((pad[..., :-2] - 2 * pad[..., 1:-1] + pad[..., 2:]) / dy**2) ** 2 @ w
    return l2, d1, d2


def _bump_ramp(y1, t, L, T):
    return 0.5 * (1 - np.cos(2 * np.pi * y1[None, :] / L)) * (t[:, None] / T)


def dependence_experiment(config: ModelConfig, kind: str = "pressure", amplitude: float = 1e-2,
                          which: str = "q_in", shape=None, swap: bool = False,
                          threads: int = 2) -> DependenceReport:
    """Solve two problems that differ by ``amplitude`` and evaluate both sides
    of the continuous-dependence estimate.

    Parameters
    ----------
    kind : {"pressure", "deformation", "none"}
        ``pressure`` adds ``amplitude * shape`` to the boundary pressure
        ``which``; ``deformation`` uses ``h2 = h1 + amplitude * bump(y1) t/T``
        with a clamped bump; ``none`` solves the same problem twice.
    shape : callable, optional
        Pressure perturbation profile ``f(coord, t)``; defaults to the
        configured wall-pressure pulse normalized to unit amplitude.
    swap : bool
        Exchange the roles of the two solutions.
    """
    if kind not in ("pressure", "deformation", "none"):
        raise DomainError(f"unknown perturbation kind '{kind}'")
    if which not in ("q_in", "q_out", "q_w"):
        raise DomainError(f"unknown pressure '{which}'")
    base = BoundaryPressures(config.q_in, config.q_out, config.q_w)
    m1 = CoupledModel(config, base)
    delta1 = m1.zero_wall()
    delta2 = delta1
    bp2 = base
    s = amplitude if kind != "none" else 0.0
    if kind == "pressure":
        if shape is None:
            qw = config.q_w
            shape = qw.scaled(1.0 / qw.params[0]) if qw.kind == "pulse" and qw.params[0] else qw
        kw = {k: getattr(base, k) for k in ("q_in", "q_out", "q_w")}
        kw[which] = _Perturbed(kw[which], shape, s)
        bp2 = BoundaryPressures(**kw)
    elif kind == "deformation":
        delta2 = s * _bump_ramp(m1.y1, m1.times, config.L, config.T)
    m2 = CoupledModel(config, bp2)
    runs = [(m1, delta1), (m2, delta2)]
    if swap:
        runs.reverse()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        tr1, tr2 = ex.map(lambda r: r[0].evaluate(r[1]), runs)
    (ma, _), (mb, _) = runs
    return _dependence_terms(config, ma, mb, tr1, tr2, kind, s)


def _dependence_terms(cfg, m1, m2, tr1: Trajectory, tr2: Trajectory, kind, s) -> DependenceReport:
    g = m1.grid
    t = tr1.times
    dt, dy = cfg.dt, g.dy1
    Y2 = g.Y2
    E = np.asarray(m1.wall_params.Estiff)
    c_ko = _coarse_korn(m1, tr2.history)
    H1, H2 = tr1.history, tr2.history
    nt = t.size
    vel_l2 = np.zeros(nt)
    vel_w12 = np.zeros(nt)
    u1_w12 = np.zeros(nt)
    for n in range(nt):
        p1 = PointValues(h=H1.h[n][:, None], h_y1=H1.h_y1[n][:, None])
        p2 = PointValues(h=H2.h[n][:, None], h_y1=H2.h_y1[n][:, None])
        tr = point_transforms(p1, p2, Y2)
        u1 = np.moveaxis(tr1.flow[n].u, 0, -1)
        diff = np.moveaxis(piola_apply(u1, tr), -1, 0) - tr2.flow[n].u
        gd = gradient(diff, g)
        vel_l2[n] = np.sum(g.W * (diff**2).sum(axis=0))
        vel_w12[n] = vel_l2[n] + np.sum(g.W * (gd**2).sum(axis=(-1, -2)))
        gu = gradient(tr1.flow[n].u, g)
        u1_w12[n] = np.sum(g.W * ((tr1.flow[n].u**2).sum(axis=0) + (gu**2).sum(axis=(-1, -2))))

    w = np.full(g.n1, dy)
    w[[0, -1]] *= 0.5
    deta = tr1.eta - tr2.eta
    dsig = tr1.sigma - tr2.sigma
    l2s = (dsig**2 * E) @ w
    l2e = (deta**2 * E) @ w
    d1e = np.sum(0.5 * (E[1:] + E[:-1]) * (np.diff(deta, axis=-1) / dy) ** 2, axis=-1) * dy
    s0, s1, s2 = _wall_norms(dsig, dy)
    terms = {
        "velocity": 0.5 * cfg.alpha * vel_l2,
        "velocity_w12": 0.5 * cfg.alpha * cfg.nu * c_ko * _cumtrapz(vel_w12, t),
        "wall_velocity": 0.5 * l2s,
        "wall_displacement": 0.5 * cfg.b * l2e,
        "wall_slope": 0.5 * cfg.a * d1e,
        "wall_velocity_h2": cfg.c * float(E.mean()) * _cumtrapz(s0 + s1 + s2, t),
    }
    lhs = sum(terms.values())

    # right-hand side
    bp1, bp2 = m1.bp, m2.bp
    dq = np.zeros(nt)
    qw1 = np.zeros(nt)
    for n, tn in enumerate(t):
        a = bp1.traces(g, tn)
        b = bp2.traces(g, tn)
        dq[n] = (g.w2 @ (a[0] - b[0]) ** 2 + g.w2 @ (a[1] - b[1]) ** 2
                 + g.w1 @ (a[2] - b[2]) ** 2)
        qw1[n] = g.w1 @ a[2] ** 2
    rhs_data = _cumtrapz(dq, t)

    ht1 = np.asarray(H1.h_t)
    ht2 = np.asarray(H2.h_t)
    h1t_w1inf = np.max(np.abs(ht1), axis=1) + np.max(np.abs(H1.h_ty1), axis=1)
    h2t_inf = np.max(np.abs(ht2), axis=1)
    omega = _cumtrapz(np.sqrt(u1_w12) + u1_w12 + h1t_w1inf**2 + h2t_inf**2 + qw1, t)
    hbar = np.asarray(H1.h) - np.asarray(H2.h)
    hbar_t = ht1 - ht2
    b0, b1, _ = _wall_norms(hbar, dy)
    hbar_yy = np.asarray(H1.h_y1y1) - np.asarray(H2.h_y1y1)
    b2 = (hbar_yy**2) @ w
    run_max = np.maximum.accumulate
    w1inf = run_max(np.sqrt(b0)) + run_max(np.sqrt((hbar_t**2) @ w))
    linf_h2 = run_max(np.sqrt(b0 + b1 + b2))
    rhs_def = omega * (w1inf**2 + linf_h2**2)
    rhs = rhs_data + rhs_def
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    return DependenceReport(kind, s, t, lhs, rhs_data, rhs_def, omega, ratio, c_ko, terms)


# ---------------------------------------------------------------------------
# equicontinuity
# ---------------------------------------------------------------------------

@dataclass
class EquicontinuityProfile:
    taus: np.ndarray
    values: np.ndarray
    c: float

    @property
    def max_slope(self) -> float:
        m = self.taus > 0
        return float(np.max(self.values[m] / self.taus[m])) if np.any(m) else 0.0


def equicontinuity_profile(traj: Trajectory, taus, grid: Optional[Grid2D] = None) -> EquicontinuityProfile:
    """``int_0^{T-tau} |sqrt(h) u(t+tau) - sqrt(h) u(t)|^2 + |sigma(t+tau) - sigma(t)|^2 dt``.

    Each ``tau`` must be a multiple of the time step and smaller than ``T``.
    The constant ``c`` is the least-squares fit of ``value = c tau``
    through the origin.
    """
    t = np.asarray(traj.times)
    dt = t[1] - t[0]
    hist = traj.history
    n1 = hist.y1.size
    n2 = traj.flow[0].u.shape[-1]
    g = grid or Grid2D(float(hist.y1[-1]), n1 - 1, n2 - 1)
    w1 = g.w1
    su = np.array([np.sqrt(hist.h[n])[None, :, None] * traj.flow[n].u for n in range(t.size)])
    sig = traj.sigma
    taus = np.asarray(taus, dtype=float)
    vals = np.zeros(taus.size)
    for k, tau in enumerate(taus):
        m = tau / dt
        if tau < 0 or abs(m - round(m)) > 1e-9 * max(1.0, m) or tau >= t[-1] - t[0] + 0.5 * dt:
            raise DomainError(f"tau = {tau!r} is not a multiple of dt below T")
        m = int(round(m))
        if m == 0:
            continue
        du = su[m:] - su[:-m]
        f = np.einsum("nkij,ij->n", du**2, g.W) + ((sig[m:] - sig[:-m]) ** 2) @ w1
        vals[k] = float(np.sum(0.5 * (f[1:] + f[:-1])) * dt) if f.size > 1 else 0.0
    denom = float(np.sum(taus**2))
    c = float(np.sum(taus * vals) / denom) if denom > 0 else 0.0
    return EquicontinuityProfile(taus, vals, c)
