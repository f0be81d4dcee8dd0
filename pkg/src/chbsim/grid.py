"""Structured 2D grid, nodal fields, and the discrete differential operators.

The domain is the rectangle [0, lx] x [0, ly], discretized with nx * ny
collocated nodes (nodes sit on the boundary, spacing hx = lx/(nx-1)).
Scalar data is stored as flat arrays of length nx*ny in row-major order,
index k = iy*nx + ix.

Discrete L2 structure.  All inner products, adjoints and symmetry
statements in this package are taken with respect to the trapezoidal
quadrature weights w_k = hx*hy * tx_i * ty_j (tx, ty = 1/2 on boundary
rows/columns, 1 inside).  That weighted inner product is the discrete
realization of the L2(Omega) pairing; operators built here are exactly
self-adjoint with respect to it.

First derivatives use centered differences in the interior and one-sided
differences on the boundary rows, chosen so that the pair (weights, D)
satisfies a summation-by-parts identity exactly:

    sum_k w_k (Dx f)_k g_k + sum_k w_k f_k (Dx g)_k = boundary terms.

The exact discrete Gauss identity is what makes constant-pressure states
produce exactly zero interior forces, and what keeps phase and fluid
mass conserved to solver tolerance.

The zero-flux (Neumann) Laplacian is a finite-volume flux balance over
trapezoidal control volumes; it is conservative (constants map to zero,
weighted means are preserved under evolution) and second-order accurate
including the boundary rows for fields that satisfy the zero-flux
condition.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

EDGES = ("left", "right", "bottom", "top")


def _check_edge_tags(edge_tags):
    for e in EDGES:
        if e not in edge_tags:
            raise ValueError(f"missing edge tag for '{e}'")
        if edge_tags[e] not in (DIRICHLET, NEUMANN):
            raise ValueError(f"edge tag for '{e}' must be '{DIRICHLET}' or '{NEUMANN}'")
    if all(edge_tags[e] == NEUMANN for e in EDGES):
        raise ValueError("at least one edge must be dirichlet (rigid-body modes otherwise)")


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid on [0, lx] x [0, ly].

    edge_tags assigns each edge of the rectangle a boundary type for the
    displacement problem ('dirichlet' = clamped, 'neumann' = traction).
    Corner nodes touching at least one Dirichlet edge are Dirichlet.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    edge_tags: dict = field(default_factory=lambda: {e: DIRICHLET for e in EDGES})

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid needs nx >= 4 and ny >= 4")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain lengths must be positive")
        _check_edge_tags(self.edge_tags)

    @property
    def hx(self):
        return self.lx / (self.nx - 1)

    @property
    def hy(self):
        return self.ly / (self.ny - 1)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def n_nodes(self):
        return self.nx * self.ny

    def coords(self):
        """Nodal coordinates as two flat arrays (x, y)."""
        x = np.linspace(0.0, self.lx, self.nx)
        y = np.linspace(0.0, self.ly, self.ny)
        X, Y = np.meshgrid(x, y)
        return X.ravel(), Y.ravel()

    def quad_weights(self):
        """Trapezoidal quadrature weights (control volumes), flat array."""
        tx = np.ones(self.nx)
        tx[0] = tx[-1] = 0.5
        ty = np.ones(self.ny)
        ty[0] = ty[-1] = 0.5
        return (self.hx * self.hy) * np.outer(ty, tx).ravel()

    def integrate(self, values):
        return float(np.dot(self.quad_weights(), np.asarray(values).ravel()))

    def mean(self, values):
        return self.integrate(values) / (self.lx * self.ly)

    def dirichlet_mask(self):
        """Boolean flat mask of nodes clamped for the displacement problem.

        A boundary node is Dirichlet when it lies on a Dirichlet edge;
        corners are Dirichlet if either adjacent edge is Dirichlet.
        """
        m = np.zeros(self.shape, dtype=bool)
        if self.edge_tags["left"] == DIRICHLET:
            m[:, 0] = True
        if self.edge_tags["right"] == DIRICHLET:
            m[:, -1] = True
        if self.edge_tags["bottom"] == DIRICHLET:
            m[0, :] = True
        if self.edge_tags["top"] == DIRICHLET:
            m[-1, :] = True
        return m.ravel()

    def edge_node_mask(self, edge):
        m = np.zeros(self.shape, dtype=bool)
        if edge == "left":
            m[:, 0] = True
        elif edge == "right":
            m[:, -1] = True
        elif edge == "bottom":
            m[0, :] = True
        elif edge == "top":
            m[-1, :] = True
        else:
            raise ValueError(f"unknown edge '{edge}'")
        return m.ravel()

    def boundary_quad_weights(self, edge):
        """1D trapezoid weights along one edge (flat array, zero off-edge)."""
        w = np.zeros(self.shape)
        if edge in ("left", "right"):
            t = np.ones(self.ny)
            t[0] = t[-1] = 0.5
            col = 0 if edge == "left" else -1
            w[:, col] = self.hy * t
        else:
            t = np.ones(self.nx)
            t[0] = t[-1] = 0.5
            row = 0 if edge == "bottom" else -1
            w[row, :] = self.hx * t
        return w.ravel()

    # --- cached sparse difference operators -------------------------------

    def _ops(self):
        ops = _OP_CACHE.get(self._key())
        if ops is None:
            ops = _build_ops(self)
            _OP_CACHE[self._key()] = ops
        return ops

    def _key(self):
        return (self.nx, self.ny, self.lx, self.ly)

    @property
    def dx_op(self):
        """Sparse d/dx on flat scalars (centered interior, one-sided SBP rows)."""
        return self._ops()["dx"]

    @property
    def dy_op(self):
        return self._ops()["dy"]

    @property
    def dx_op_t(self):
        return self._ops()["dxt"]

    @property
    def dy_op_t(self):
        return self._ops()["dyt"]


_OP_CACHE = {}


def _sbp_first_derivative(n, h):
    """1D first derivative, trapezoid-norm summation-by-parts pair.

    Centered differences inside, first-order one-sided rows at the two
    boundary nodes.  With trapezoid weights this satisfies the discrete
    integration-by-parts identity exactly.
    """
    rows, cols, vals = [], [], []
    rows += [0, 0]
    cols += [0, 1]
    vals += [-1.0 / h, 1.0 / h]
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [n - 1, n - 1]
    cols += [n - 2, n - 1]
    vals += [-1.0 / h, 1.0 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _build_ops(grid):
    d1x = _sbp_first_derivative(grid.nx, grid.hx)
    d1y = _sbp_first_derivative(grid.ny, grid.hy)
    ix = sp.identity(grid.nx, format="csr")
    iy = sp.identity(grid.ny, format="csr")
    dx = sp.kron(iy, d1x, format="csr")
    dy = sp.kron(d1y, ix, format="csr")
    return {"dx": dx, "dy": dy, "dxt": dx.T.tocsr(), "dyt": dy.T.tocsr()}


# --- fields ---------------------------------------------------------------


@dataclass
class ScalarField:
    """Nodal scalar field; values flat, row-major."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.n_nodes:
            raise ValueError("field length does not match grid")

    @classmethod
    def from_function(cls, grid, fn):
        x, y = grid.coords()
        return cls(grid, fn(x, y))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.n_nodes, float(c)))

    def as2d(self):
        return self.values.reshape(self.grid.shape)

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField2:
    """Nodal 2-vector field, components ux, uy flat."""

    grid: Grid
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        self.ux = np.asarray(self.ux, dtype=float).ravel()
        self.uy = np.asarray(self.uy, dtype=float).ravel()
        if self.ux.size != self.grid.n_nodes or self.uy.size != self.grid.n_nodes:
            raise ValueError("component length does not match grid")

    @classmethod
    def zero(cls, grid):
        n = grid.n_nodes
        return cls(grid, np.zeros(n), np.zeros(n))

    def copy(self):
        return VectorField2(self.grid, self.ux.copy(), self.uy.copy())


@dataclass
class SymTensorField:
    """Symmetric 2x2 tensor field, components (xx, yy, xy) flat."""

    grid: Grid
    xx: np.ndarray
    yy: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        for name in ("xx", "yy", "xy"):
            v = np.asarray(getattr(self, name), dtype=float).ravel()
            if v.size != self.grid.n_nodes:
                raise ValueError("component length does not match grid")
            setattr(self, name, v)

    def trace(self):
        return self.xx + self.yy


# --- operators ------------------------------------------------------------


def symmetric_gradient(u):
    """Symmetrized gradient of a displacement field, nodewise.

    Centered differences in the interior, one-sided on boundary rows.
    Exact for affine fields: E((x, y)) = I, E((-y, x)) = 0.
    """
    g = u.grid
    dxux = g.dx_op @ u.ux
    dyuy = g.dy_op @ u.uy
    dyux = g.dy_op @ u.ux
    dxuy = g.dx_op @ u.uy
    return SymTensorField(g, dxux, dyuy, 0.5 * (dyux + dxuy))


def divergence(u):
    """Divergence of a vector field = trace of the symmetric gradient."""
    g = u.grid
    return ScalarField(g, g.dx_op @ u.ux + g.dy_op @ u.uy)


def gradient(f):
    """Nodal gradient of a scalar field (same stencils as divergence)."""
    g = f.grid
    return VectorField2(g, g.dx_op @ f.values, g.dy_op @ f.values)


def neumann_laplacian(f, coeff):
    """Zero-flux div(c grad f) with face-averaged coefficients.

    Finite-volume flux balance over trapezoidal control volumes; fluxes
    through the outer boundary faces are zero.  Conservative: the
    quadrature-weighted mean of the output vanishes identically, and
    constants are mapped to zero.
    """
    g = f.grid
    c2 = _coeff_grid(g, coeff)
    f2 = f.values.reshape(g.shape)
    return ScalarField(g, _nl_apply(g, f2, c2).ravel())


def _coeff_grid(g, coeff):
    """Validate a flux coefficient and return it shaped (ny, nx)."""
    if isinstance(coeff, ScalarField):
        coeff = coeff.values
    c2 = np.asarray(coeff, dtype=float)
    c2 = c2.reshape(g.shape) if c2.ndim else np.full(g.shape, float(c2))
    if np.any(c2 <= 0.0):
        raise ValueError("flux coefficient must be positive everywhere")
    return c2


def _nl_apply(grid, f2, c2):
    hx, hy = grid.hx, grid.hy
    # face coefficients: arithmetic mean of the two adjacent nodes
    cfx = 0.5 * (c2[:, 1:] + c2[:, :-1])
    cfy = 0.5 * (c2[1:, :] + c2[:-1, :])
    fx = cfx * (f2[:, 1:] - f2[:, :-1]) / hx   # flux density across x-faces
    fy = cfy * (f2[1:, :] - f2[:-1, :]) / hy
    out = np.zeros_like(f2)
    out[:, :-1] += fx
    out[:, 1:] -= fx
    out /= hx
    # halve the control volume on left/right boundary columns
    out[:, 0] *= 2.0
    out[:, -1] *= 2.0
    outy = np.zeros_like(f2)
    outy[:-1, :] += fy
    outy[1:, :] -= fy
    outy /= hy
    outy[0, :] *= 2.0
    outy[-1, :] *= 2.0
    return out + outy


def flux_stiffness_matrix(grid, coeff=1.0):
    """Sparse SPD matrix B with neumann_laplacian(f, c) = -B f / w.

    B is the flux-balance form of the zero-flux operator: symmetric,
    positive semidefinite, kernel = constants, f' B f = sum_faces
    c |grad f|^2 dV.  Used by the time stepper for system applies and
    Jacobi diagonals.
    """
    ny, nx = grid.shape
    hx, hy = grid.hx, grid.hy
    c2 = _coeff_grid(grid, coeff)
    ty = np.ones(ny)
    ty[0] = ty[-1] = 0.5
    tx = np.ones(nx)
    tx[0] = tx[-1] = 0.5
    idx = np.arange(nx * ny).reshape(ny, nx)
    rows, cols, vals = [], [], []
    # x-faces: weight c_face * (hy * ty_j) / hx
    cf = 0.5 * (c2[:, 1:] + c2[:, :-1]) * (hy / hx) * ty[:, None]
    a = idx[:, :-1].ravel()
    b = idx[:, 1:].ravel()
    v = cf.ravel()
    rows += [a, b, a, b]
    cols += [a, b, b, a]
    vals += [v, v, -v, -v]
    # y-faces: weight c_face * (hx * tx_i) / hy
    cf = 0.5 * (c2[1:, :] + c2[:-1, :]) * (hx / hy) * tx[None, :]
    a = idx[:-1, :].ravel()
    b = idx[1:, :].ravel()
    v = cf.ravel()
    rows += [a, b, a, b]
    cols += [a, b, b, a]
    vals += [v, v, -v, -v]
    n = nx * ny
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))


def laplacian_stiffness_form(f, coeff=1.0):
    """Quadratic form f -> sum_faces c |grad f|^2 dV (the Dirichlet energy

    of the zero-flux Laplacian, so that <f, -neumann_laplacian(f, c)>_W
    equals this exactly).  Used for interface-energy evaluation.
    """
    g = f.grid
    c2 = np.asarray(coeff).reshape(g.shape) if np.ndim(coeff) else np.full(g.shape, float(coeff))
    f2 = f.values.reshape(g.shape)
    hx, hy = g.hx, g.hy
    tx = np.ones(g.nx)
    tx[0] = tx[-1] = 0.5
    ty = np.ones(g.ny)
    ty[0] = ty[-1] = 0.5
    cfx = 0.5 * (c2[:, 1:] + c2[:, :-1])
    cfy = 0.5 * (c2[1:, :] + c2[:-1, :])
    ex = cfx * ((f2[:, 1:] - f2[:, :-1]) / hx) ** 2   # x-face volume: hx*hy*ty_j
    ey = cfy * ((f2[1:, :] - f2[:-1, :]) / hy) ** 2
    sx = float(np.sum(ex * ty[:, None]) * hx * hy)
    sy = float(np.sum(ey * tx[None, :]) * hx * hy)
    return sx + sy
