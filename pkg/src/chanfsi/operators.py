"""Discrete transformed operators and forms on the reference rectangle.

Fields live on the nodes of a uniform ``(N1+1) x (N2+1)`` grid with index
order ``[i, j]`` (``i`` along y1). Scalars have shape ``(n1, n2)``, vectors
``(2, n1, n2)``. Flattened vectors use C order, so node ``(i, j)`` maps to
``i * n2 + j``.

Two discretizations coexist:

* nodal forms: second-order centered differences (one-sided at the edges)
  and the tensor trapezoidal rule. These are the diagnostic operators
  (``div_h_field``, ``viscous_form`` ...).
* bilinear-element stiffness matrices with 2x2 Gauss quadrature, used by the
  time stepper for the viscous and pressure-Laplacian blocks because they
  have no odd-even null modes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from .errors import DimensionError
from .geometry import DeformationSnapshot, metric_factor

__all__ = [
    "Grid2D",
    "FlowState",
    "gradient",
    "hat_gradient",
    "div_h_field",
    "def_tensor_field",
    "def_tensor_factorized",
    "viscous_form",
    "transport_integrand",
    "convective_form",
    "skew_convective_form",
    "pressure_form",
    "l2_norm",
    "h1_norm",
    "divergence_matrix",
    "transport_matrix",
    "q1_viscous_matrix",
    "q1_laplace_matrix",
    "q1_h1_gram",
    "Q1Kit",
    "PatternAssembler",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform node grid on ``(0, L) x (0, 1)``.

    Parameters
    ----------
    L : float
        Channel length.
    N1, N2 : int
        Cell counts along y1 and y2 (each at least 4).
    """

    L: float
    N1: int
    N2: int

    def __post_init__(self):
        if self.N1 < 4 or self.N2 < 4:
            raise DimensionError(f"need N1, N2 >= 4, got {self.N1}, {self.N2}")
        if not self.L > 0:
            raise DimensionError("L must be positive")

    @property
    def n1(self) -> int:
        return self.N1 + 1

    @property
    def n2(self) -> int:
        return self.N2 + 1

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def dy1(self) -> float:
        return self.L / self.N1

    @property
    def dy2(self) -> float:
        return 1.0 / self.N2

    @cached_property
    def y1(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n1)

    @cached_property
    def y2(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n2)

    @cached_property
    def Y2(self) -> np.ndarray:
        return np.broadcast_to(self.y2[None, :], self.shape)

    @cached_property
    def w1(self) -> np.ndarray:
        return _trap_weights(self.n1, self.dy1)

    @cached_property
    def w2(self) -> np.ndarray:
        return _trap_weights(self.n2, self.dy2)

    @cached_property
    def W(self) -> np.ndarray:
        """Tensor trapezoidal weights, shape ``(n1, n2)``."""
        return np.outer(self.w1, self.w2)

    @cached_property
    def d1(self) -> sps.csr_matrix:
        return _fd1(self.n1, self.dy1)

    @cached_property
    def d2(self) -> sps.csr_matrix:
        return _fd1(self.n2, self.dy2)

    @cached_property
    def D1(self) -> sps.csr_matrix:
        """d/dy1 on flattened fields."""
        return sps.kron(self.d1, sps.identity(self.n2), format="csr")

    @cached_property
    def D2(self) -> sps.csr_matrix:
        """d/dy2 on flattened fields."""
        return sps.kron(sps.identity(self.n1), self.d2, format="csr")

    def index(self, i, j):
        return np.asarray(i) * self.n2 + np.asarray(j)

    # boundary node sets (flat indices)
    @cached_property
    def inlet(self) -> np.ndarray:
        return self.index(0, np.arange(self.n2))

    @cached_property
    def outlet(self) -> np.ndarray:
        return self.index(self.N1, np.arange(self.n2))

    @cached_property
    def wall(self) -> np.ndarray:
        return self.index(np.arange(self.n1), self.N2)

    @cached_property
    def center(self) -> np.ndarray:
        return self.index(np.arange(self.n1), 0)

    def zeros(self, ncomp: int | None = None) -> np.ndarray:
        return np.zeros(self.shape if ncomp is None else (ncomp,) + self.shape)

    def check_scalar(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise DimensionError(f"scalar field has shape {f.shape}, expected {self.shape}")
        return f

    def check_vector(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (2,) + self.shape:
            raise DimensionError(f"vector field has shape {u.shape}, expected {(2,) + self.shape}")
        return u


def _trap_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[[0, -1]] = 0.5 * dx
    return w


def _fd1(n: int, dx: float) -> sps.csr_matrix:
    """Second-order first derivative: centered inside, one-sided at the ends."""
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5, 0.5]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5, 2.0, -0.5, 1.5, -2.0, 0.5]
    return sps.csr_matrix((np.array(vals) / dx, (rows, cols)), shape=(n, n))


@dataclass
class FlowState:
    """Transformed velocity ``u`` (shape ``(2, n1, n2)``) and kinematic pressure.

    ``q`` is the zero-mean part of the pressure (trapezoidal mean over the
    reference rectangle) and ``q_level`` the mean itself, so the full
    pressure is ``q + q_level``.
    """

    u: np.ndarray
    q: np.ndarray
    t: float = 0.0
    q_level: float = 0.0

    @classmethod
    def zero(cls, grid: Grid2D, t: float = 0.0) -> "FlowState":
        return cls(grid.zeros(2), grid.zeros(), t, 0.0)

    @property
    def pressure(self) -> np.ndarray:
        return self.q + self.q_level

    def bc_defect(self, grid: Grid2D) -> float:
        """Largest violation of the essential boundary conditions."""
        u1 = self.u[0].ravel()
        u2 = self.u[1].ravel()
        parts = [u1[grid.wall], u2[grid.inlet], u2[grid.outlet], u2[grid.center]]
        return float(max(np.max(np.abs(p)) for p in parts))


# ---------------------------------------------------------------------------
# nodal helpers
# ---------------------------------------------------------------------------

def _h_nodes(h, grid: Grid2D):
    """Return ``h`` and ``h_y1`` broadcast to ``(n1, 1)``."""
    if isinstance(h, DeformationSnapshot):
        hv, hy = h.h, h.h_y1
    elif isinstance(h, tuple):
        hv, hy = h
    else:
        hv, hy = h, 0.0
    hv = np.broadcast_to(np.asarray(hv, dtype=float), (grid.n1,))
    hy = np.broadcast_to(np.asarray(hy, dtype=float), (grid.n1,))
    return hv[:, None], hy[:, None]


def _dy1(f, grid):
    return (grid.d1 @ f.reshape(grid.n1, -1)).reshape(f.shape)


def _dy2(f, grid):
    return (grid.d2 @ f.T.reshape(grid.n2, -1)).reshape(f.T.shape).T


def gradient(u, grid: Grid2D) -> np.ndarray:
    """Reference gradient ``G[a, b, i, k] = d u_i / d y_k`` at every node."""
    u = grid.check_vector(u)
    G = np.empty(grid.shape + (2, 2))
    for i in range(2):
        G[..., i, 0] = _dy1(u[i], grid)
        G[..., i, 1] = _dy2(u[i], grid)
    return G


def hat_gradient(f, h, grid: Grid2D) -> np.ndarray:
    """Transformed derivatives of a scalar field, shape ``(2, n1, n2)``."""
    f = grid.check_scalar(f)
    hv, hy = _h_nodes(h, grid)
    fy1, fy2 = _dy1(f, grid), _dy2(f, grid)
    return np.stack([fy1 - grid.Y2 * hy / hv * fy2, fy2 / hv])


def div_h_field(u, h, grid: Grid2D) -> np.ndarray:
    """Transformed divergence ``d1 u1 - (y2/h) h_y1 d2 u1 + (1/h) d2 u2``."""
    u = grid.check_vector(u)
    hv, hy = _h_nodes(h, grid)
    u1_y2 = _dy2(u[0], grid)
    return _dy1(u[0], grid) - grid.Y2 * hy / hv * u1_y2 + _dy2(u[1], grid) / hv


def def_tensor_field(u, h, grid: Grid2D) -> np.ndarray:
    """Symmetric transformed deformation tensor ``e_h(u)``, shape ``(n1, n2, 2, 2)``."""
    u = grid.check_vector(u)
    dh = np.stack([hat_gradient(u[i], h, grid) for i in range(2)])  # [i, k] -> d^_k u_i
    e = np.empty(grid.shape + (2, 2))
    for i in range(2):
        for j in range(2):
            e[..., i, j] = 0.5 * (dh[j, i] + dh[i, j])
    return e


def def_tensor_factorized(u, h, grid: Grid2D) -> np.ndarray:
    """``grad u F_h + (grad u F_h)^T`` with the same discrete gradient."""
    hv, hy = _h_nodes(h, grid)
    F = metric_factor(hv, hy, grid.Y2)
    A = gradient(u, grid) @ F
    return A + np.swapaxes(A, -1, -2)


def viscous_form(u, psi, h, mu_over_rho: float, grid: Grid2D) -> float:
    """``(mu/rho) int_D h e_h(u) : e_h(psi)`` by the trapezoidal rule."""
    hv, _ = _h_nodes(h, grid)
    eu = def_tensor_field(u, h, grid)
    ep = def_tensor_field(psi, h, grid)
    return float(mu_over_rho * np.sum(grid.W * hv * np.einsum("...ij,...ij->...", eu, ep)))


def transport_integrand(u, z, psi, h, grid: Grid2D) -> np.ndarray:
    """Nodal values of ``(h u1 (d_y1 z - y2 h_y1/h d_y2 z) + u2 d_y2 z) . psi``."""
    u, z, psi = grid.check_vector(u), grid.check_vector(z), grid.check_vector(psi)
    hv, hy = _h_nodes(h, grid)
    a1 = hv * u[0]
    a2 = -grid.Y2 * hy * u[0] + u[1]
    out = np.zeros(grid.shape)
    for c in range(2):
        out += (a1 * _dy1(z[c], grid) + a2 * _dy2(z[c], grid)) * psi[c]
    return out


def convective_form(u, z, psi, h, grid: Grid2D, R0_in: float, R0_out: float) -> float:
    """Trilinear convective form with its inflow, outflow and wall corrections.

    The in/outflow corrections carry the reference height ``R0`` at the
    respective end, as in the weak formulation.
    """
    vol = float(np.sum(grid.W * transport_integrand(u, z, psi, h, grid)))
    out = u[0, -1, :] * z[0, -1, :] * psi[0, -1, :]
    inn = u[0, 0, :] * z[0, 0, :] * psi[0, 0, :]
    top = u[1, :, -1] * z[1, :, -1] * psi[1, :, -1]
    return (vol - 0.5 * R0_out * float(grid.w2 @ out) + 0.5 * R0_in * float(grid.w2 @ inn)
            - 0.5 * float(grid.w1 @ top))


def skew_convective_form(u, z, psi, h, grid: Grid2D) -> float:
    """``1/2 int B_h(u, z, psi) - 1/2 int B_h(u, psi, z)``."""
    d = transport_integrand(u, z, psi, h, grid) - transport_integrand(u, psi, z, h, grid)
    return 0.5 * float(np.sum(grid.W * d))


def pressure_form(q, phi, eps: float, grid: Grid2D, h=None) -> float:
    """``eps int_D h grad^ q . grad^ phi``; ``h=None`` is the unit metric."""
    h = 1.0 if h is None else h
    hv, _ = _h_nodes(h, grid)
    gq = hat_gradient(q, h, grid)
    gp = hat_gradient(phi, h, grid)
    return float(eps * np.sum(grid.W * hv * (gq * gp).sum(axis=0)))


def l2_norm(f, grid: Grid2D, weight=None) -> float:
    """Trapezoidal L2 norm of a scalar or vector field (optional weight)."""
    f = np.asarray(f, dtype=float)
    sq = f**2 if f.shape == grid.shape else (f**2).sum(axis=0)
    w = grid.W if weight is None else grid.W * weight
    return float(np.sqrt(np.sum(w * sq)))


def h1_norm(u, grid: Grid2D) -> float:
    """Full ``W^{1,2}`` norm of a vector field with the nodal gradient."""
    G = gradient(u, grid)
    return float(np.sqrt(l2_norm(u, grid) ** 2 + np.sum(grid.W * (G**2).sum(axis=(-1, -2)))))


# ---------------------------------------------------------------------------
# sparse operators used by the stepper
# ---------------------------------------------------------------------------

def _flat_h(h, grid):
    hv, hy = _h_nodes(h, grid)
    hv = np.broadcast_to(hv, grid.shape).ravel()
    hy = np.broadcast_to(hy, grid.shape).ravel()
    return hv, hy


def divergence_matrix(grid: Grid2D, h) -> sps.csr_matrix:
    """Sparse nodal ``div_h`` acting on ``[u1; u2]`` (shape ``(n, 2n)``)."""
    hv, hy = _flat_h(h, grid)
    y2 = grid.Y2.ravel()
    A = grid.D1 - sps.diags(y2 * hy / hv) @ grid.D2
    B = sps.diags(1.0 / hv) @ grid.D2
    return sps.hstack([A, B], format="csr")


def transport_matrix(grid: Grid2D, h, w) -> sps.csr_matrix:
    """Directional derivative ``h w1 d_y1 + (w2 - y2 h_y1 w1) d_y2`` (scalar)."""
    hv, hy = _flat_h(h, grid)
    w = grid.check_vector(w)
    w1, w2 = w[0].ravel(), w[1].ravel()
    a1 = hv * w1
    a2 = w2 - grid.Y2.ravel() * hy * w1
    return (sps.diags(a1) @ grid.D1 + sps.diags(a2) @ grid.D2).tocsr()


_GP = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class Q1Kit:
    """Constant bilinear-element data for a grid (2x2 Gauss points per cell).

    Local basis order is (i, j), (i+1, j), (i, j+1), (i+1, j+1). Arrays are
    indexed ``[element, gauss point, basis, direction]``.
    """

    def __init__(self, grid: Grid2D):
        self.grid = grid
        N1, N2 = grid.N1, grid.N2
        d1, d2 = grid.dy1, grid.dy2
        I, J = np.meshgrid(np.arange(N1), np.arange(N2), indexing="ij")
        self.I, self.J = I.ravel(), J.ravel()
        self.conn = np.stack([grid.index(self.I, self.J), grid.index(self.I + 1, self.J),
                              grid.index(self.I, self.J + 1), grid.index(self.I + 1, self.J + 1)],
                             axis=1)
        pts = [(a, b) for a in _GP for b in _GP]
        self.xi = np.array([p[0] for p in pts])
        zeta = np.array([p[1] for p in pts])
        self.N = np.stack([(1 - self.xi) * (1 - zeta), self.xi * (1 - zeta),
                           (1 - self.xi) * zeta, self.xi * zeta], axis=1)  # (g, a)
        dN = np.empty((4, 4, 2))
        dN[:, :, 0] = np.stack([-(1 - zeta), (1 - zeta), -zeta, zeta], axis=1) / d1
        dN[:, :, 1] = np.stack([-(1 - self.xi), -self.xi, (1 - self.xi), self.xi], axis=1) / d2
        self.dN = dN
        self.y2g = (self.J[:, None] + zeta[None, :]) * d2  # (E, g)
        self.wref = 0.25 * d1 * d2

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    def wall_at_gp(self, f) -> np.ndarray:
        """Linear interpolation of a 1D wall array to the Gauss points."""
        f = np.broadcast_to(np.asarray(f, dtype=float), (self.grid.n1,))
        return (1 - self.xi)[None, :] * f[self.I][:, None] + self.xi[None, :] * f[self.I + 1][:, None]

    def field_at_gp(self, f) -> np.ndarray:
        """Bilinear interpolation of a nodal scalar field to the Gauss points."""
        return np.asarray(f, dtype=float).ravel()[self.conn] @ self.N.T

    def hat_gradients(self, h, h_y1) -> np.ndarray:
        """Transformed basis gradients ``(E, g, a, 2)``."""
        hg, hyg = self.wall_at_gp(h), self.wall_at_gp(h_y1)
        G = np.empty((self.n_elements, 4, 4, 2))
        G[..., 0] = self.dN[None, :, :, 0] - (self.y2g * hyg / hg)[:, :, None] * self.dN[None, :, :, 1]
        G[..., 1] = self.dN[None, :, :, 1] / hg[:, :, None]
        return G

    def pairs(self, row_off=0, col_off=0):
        """Row/column indices for local ``(E, 4 test, 4 trial)`` blocks."""
        rows = row_off + np.broadcast_to(self.conn[:, :, None], (self.n_elements, 4, 4))
        cols = col_off + np.broadcast_to(self.conn[:, None, :], (self.n_elements, 4, 4))
        return rows.ravel(), cols.ravel()

    # local element matrices, indexed [element, test basis, trial basis]
    def laplace_local(self, h, h_y1, metric: bool = True) -> np.ndarray:
        if metric:
            G = self.hat_gradients(h, h_y1)
            wq = self.wref * self.wall_at_gp(h)
            return np.einsum("eg,egbk,egak->eba", wq, G, G)
        return self.wref * np.einsum("gbk,gak->ba", self.dN, self.dN)[None].repeat(self.n_elements, 0)

    def viscous_local(self, h, h_y1, nu: float) -> np.ndarray:
        """Blocks ``[e, test comp l, test basis b, trial comp k, trial basis a]``.

        For ``u = N_a e_k`` and ``psi = N_b e_l`` the integrand of
        ``nu h e_h(u):e_h(psi)`` is ``nu h/2 (delta_kl G_a.G_b + G_a[l] G_b[k])``.
        """
        G = self.hat_gradients(h, h_y1)
        wq = self.wref * self.wall_at_gp(h)
        dot = np.einsum("egak,egbk->egab", G, G)
        out = np.zeros((self.n_elements, 2, 4, 2, 4))
        for k in range(2):
            for l in range(2):
                term = np.einsum("ega,egb->egab", G[..., l], G[..., k])
                if k == l:
                    term = term + dot
                out[:, l, :, k, :] = 0.5 * nu * np.einsum("eg,egab->eba", wq, term)
        return out

    def divergence_local(self, h, h_y1) -> np.ndarray:
        """``int N_p h div_h(N_a e_k)`` as ``[e, p, k, a]``."""
        G = self.hat_gradients(h, h_y1)
        wq = self.wref * self.wall_at_gp(h)
        return np.einsum("eg,gp,egak->epka", wq, self.N, G)

    def transport_local(self, h, h_y1, w) -> np.ndarray:
        """``int N_b (a1 d_y1 N_a + a2 d_y2 N_a)`` with the transport field ``w``.

        ``a1 = h w1`` and ``a2 = w2 - y2 h_y1 w1``; indexed ``[e, b, a]``.
        """
        w = np.asarray(w, dtype=float)
        w1g, w2g = self.field_at_gp(w[0]), self.field_at_gp(w[1])
        a1 = self.wall_at_gp(h) * w1g
        a2 = w2g - self.y2g * self.wall_at_gp(h_y1) * w1g
        deriv = a1[:, :, None] * self.dN[None, :, :, 0] + a2[:, :, None] * self.dN[None, :, :, 1]
        return self.wref * np.einsum("gb,ega->eba", self.N, deriv)

    def mesh_motion_local(self, h_t) -> np.ndarray:
        """Skew moving-mesh term ``-1/2 int h_t y2 (d_y2 N_a N_b - d_y2 N_b N_a)``."""
        c = self.wall_at_gp(h_t) * self.y2g
        m = np.einsum("eg,ga,gb->eba", c, self.dN[:, :, 1], self.N)
        return -0.5 * self.wref * (m - np.swapaxes(m, 1, 2))


class PatternAssembler:
    """Sums COO triplets with a fixed pattern into CSR with one ``bincount``."""

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        keys = rows * shape[1] + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        r = uniq // shape[1]
        self.indices = (uniq % shape[1]).astype(np.int32)
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(self.indptr, r + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self.shape = shape
        self.nnz = uniq.size

    def build(self, vals) -> sps.csr_matrix:
        data = np.bincount(self.inverse, weights=np.asarray(vals, dtype=float).ravel(),
                           minlength=self.nnz)
        return sps.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def _kit(grid: Grid2D) -> Q1Kit:
    return Q1Kit(grid)


def q1_viscous_matrix(grid: Grid2D, h, nu: float) -> sps.csr_matrix:
    """Bilinear-element matrix of ``nu int h e_h(u):e_h(psi)`` on ``[u1; u2]``."""
    kit = _kit(grid)
    hv, hy = _flat_h_1d(h, grid)
    loc = kit.viscous_local(hv, hy, nu)
    n = grid.size
    ne = kit.n_elements
    comp = np.arange(2)
    rows = comp[None, :, None, None, None] * n + kit.conn[:, None, :, None, None]
    cols = comp[None, None, None, :, None] * n + kit.conn[:, None, None, None, :]
    shape5 = (ne, 2, 4, 2, 4)
    return sps.coo_matrix((loc.ravel(), (np.broadcast_to(rows, shape5).ravel(),
                                         np.broadcast_to(cols, shape5).ravel())),
                          shape=(2 * n, 2 * n)).tocsr()


def q1_laplace_matrix(grid: Grid2D, h=None, metric: bool = True) -> sps.csr_matrix:
    """Bilinear-element matrix of ``int h grad^ q . grad^ phi`` (scalar)."""
    kit = _kit(grid)
    hv, hy = _flat_h_1d(1.0 if h is None else h, grid)
    loc = kit.laplace_local(hv, hy, metric=metric)
    rows, cols = kit.pairs()
    return sps.coo_matrix((loc.ravel(), (rows, cols)), shape=(grid.size, grid.size)).tocsr()


def q1_h1_gram(grid: Grid2D) -> sps.csr_matrix:
    """Gram matrix of the plain ``H^1`` seminorm on ``[u1; u2]``."""
    lap = q1_laplace_matrix(grid, metric=False)
    return sps.block_diag([lap, lap], format="csr")


def _flat_h_1d(h, grid):
    hv, hy = _h_nodes(h, grid)
    return hv[:, 0], hy[:, 0]
