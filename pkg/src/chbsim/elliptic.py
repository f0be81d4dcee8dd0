"""Matrix-free elliptic solves: Jacobi-preconditioned CG and elasticity.

Displacement problems are posed in weak form with the trapezoidal
quadrature: for the plain variant the bilinear form is

    a(v, w) = sum_k w_k  C(phi_k) E(v)_k : E(w)_k,

assembled matrix-free from the cached sparse difference operators
(strain -> pointwise stiffness -> adjoint strain).  Variants:

  * plain      : C(phi) only
  * augmented  : C(phi) plus the volumetric term alpha^2 M (div v)(div w)
  * visco      : visco-elastic stiffness C_nu(phi), optionally shifted by
                 s times the elastic stiffness (for implicit steps of the
                 Kelvin-Voigt regime)

All variants are symmetric positive definite on the subspace of
displacements vanishing on the Dirichlet nodes; at least one Dirichlet
edge is required by the grid, which rules out rigid-body kernels.

Right-hand sides accept a body force, a nodal tensor source P entering
as + sum w_k P_k : E(w)_k (the weak form of -div P), a scalar source q
entering as + sum w_k q_k (div w)_k (the weak form of -grad q), and edge
tractions on the Neumann edges with boundary trapezoid quadrature.

The scalar CG front end solves generic SPD systems (Jacobi diagonal
supplied by the caller) and is reused by the time stepper.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import NEUMANN, EDGES, VectorField2


class SolverFailure(RuntimeError):
    """CG failed to reach tolerance; carries the residual history."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass
class CGReport:
    iterations: int
    residual: float
    residuals: list


def conjugate_gradient(apply_a, b, diag=None, tol=1e-10, maxiter=5000, x0=None):
    """Preconditioned CG for SPD operators.

    Stops when ||r|| <= tol * ||b|| + 1e-300 (relative with an absolute
    floor so b = 0 returns x = 0 immediately).  diag is the operator
    diagonal for Jacobi preconditioning; None means no preconditioning.
    Raises SolverFailure when maxiter is exhausted.
    """
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), CGReport(0, 0.0, [0.0])
    target = tol * bnorm
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply_a(x)
    minv = None
    if diag is not None:
        d = np.asarray(diag, dtype=float)
        minv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    z = r * minv if minv is not None else r
    p = z.copy()
    rz = float(np.dot(r, z))
    res = float(np.linalg.norm(r))
    history = [res]
    if res <= target:
        return x, CGReport(0, res, history)
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        pap = float(np.dot(p, ap))
        if pap <= 0.0:
            raise SolverFailure(
                f"operator not positive definite (p'Ap = {pap:.3e} at iter {it})", history)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        history.append(res)
        if res <= target:
            return x, CGReport(it, res, history)
        z = r * minv if minv is not None else r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverFailure(
        f"CG did not converge in {maxiter} iterations (residual {res:.3e}, target {target:.3e})",
        history)


def solve_scalar_spd(apply_a, b, diag=None, tol=1e-10, maxiter=5000, x0=None):
    """Generic SPD scalar solve; thin wrapper kept for call-site clarity."""
    return conjugate_gradient(apply_a, b, diag=diag, tol=tol, maxiter=maxiter, x0=x0)


PLAIN = "plain"
AUGMENTED = "augmented"
VISCO = "visco"


@dataclass
class EllipticProblem:
    """One displacement solve context with frozen coefficient fields.

    variant selects the stiffness (see module docstring); shift adds
    shift * elastic stiffness on top of the visco stiffness.  scale
    multiplies the Lame parameters of the (elastic) stiffness; the
    coupled model uses scale = 2 because its strain energy density
    C(E-T):(E-T) has strain derivative 2 C (E-T).
    """

    grid: object
    material: object
    phi: np.ndarray
    variant: str = PLAIN
    scale: float = 1.0
    shift: float = 0.0
    tol: float = 1e-10
    maxiter: int = 20000

    lam: np.ndarray = field(init=False)
    mu: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.variant not in (PLAIN, AUGMENTED, VISCO):
            raise ValueError(f"unknown elliptic variant '{self.variant}'")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        if self.phi.size != self.grid.n_nodes:
            raise ValueError("phase field length does not match grid")
        lam, mu = self.material.lame(self.phi)
        self.lam = self.scale * lam
        self.mu = self.scale * mu
        w = self.grid.quad_weights()
        self._w = w
        self._free = ~self.grid.dirichlet_mask()
        if self.variant == AUGMENTED:
            alpha = self.material.biot_alpha(self.phi)
            bm = self.material.biot_modulus(self.phi)
            self._aug = alpha**2 * bm
        else:
            self._aug = None
        if self.variant == VISCO:
            lam_nu, mu_nu = self.material.lame_visco(self.phi)
            self._lam_nu, self._mu_nu = lam_nu, mu_nu
        self._diag = self._jacobi_diagonal()

    # --- operator application --------------------------------------------

    def _stiffness_terms(self):
        """(lam_like, mu_like, aug_like) coefficient arrays for the form."""
        if self.variant == VISCO:
            lam = self._lam_nu + self.shift * self.lam
            mu = self._mu_nu + self.shift * self.mu
            return lam, mu, None
        return self.lam, self.mu, self._aug

    def apply(self, ux, uy):
        """Apply the stiffness operator to a displacement (free-dof form).

        Dirichlet entries of the input are ignored (treated as zero) and
        the Dirichlet entries of the output are zeroed.
        """
        g = self.grid
        free = self._free
        ux = np.where(free, ux, 0.0)
        uy = np.where(free, uy, 0.0)
        lam, mu, aug = self._stiffness_terms()
        exx = g.dx_op @ ux
        eyy = g.dy_op @ uy
        exy = 0.5 * (g.dy_op @ ux + g.dx_op @ uy)
        tr = exx + eyy
        sxx = 2.0 * mu * exx + lam * tr
        syy = 2.0 * mu * eyy + lam * tr
        sxy = 2.0 * mu * exy
        if aug is not None:
            sxx = sxx + aug * tr
            syy = syy + aug * tr
        w = self._w
        outx = g.dx_op_t @ (w * sxx) + g.dy_op_t @ (w * sxy)
        outy = g.dx_op_t @ (w * sxy) + g.dy_op_t @ (w * syy)
        outx[~free] = 0.0
        outy[~free] = 0.0
        return outx, outy

    def _jacobi_diagonal(self):
        """Exact diagonal of the stiffness, via elementwise-squared stencils."""
        g = self.grid
        lam, mu, aug = self._stiffness_terms()
        w = self._w
        dx2 = g.dx_op.power(2)
        dy2 = g.dy_op.power(2)
        c_xx = 2.0 * mu + lam + (aug if aug is not None else 0.0)
        c_sh = mu  # shear block: 2 mu * (1/2)^2 * 2 contributions -> mu/2 per op? no:
        # diag of a(e_i, e_i) for the x-component:
        #   sum_k w_k [ (2mu+lam+aug)_k (Dx)_{k i}^2 + 2 mu_k (1/2 (Dy)_{k i})^2 * 2 ]
        # = (Dx^2)^T (w (2mu+lam+aug)) + (Dy^2)^T (w mu / 2) * 2
        dgx = dx2.T @ (w * c_xx) + dy2.T @ (w * c_sh)
        dgy = dy2.T @ (w * c_xx) + dx2.T @ (w * c_sh)
        diag = np.concatenate([dgx, dgy])
        free2 = np.concatenate([self._free, self._free])
        diag[~free2] = 1.0
        return diag

    # --- right-hand side assembly ----------------------------------------

    def assemble_rhs(self, body=None, tensor_source=None, scalar_source=None,
                     traction=None):
        """Weak right-hand side vector (rx, ry) for the listed sources.

        body: VectorField2 body force f, enters as sum w f . w_test
        tensor_source: SymTensorField P, enters as sum w P : E(w_test),
            the weak form of -div P
        scalar_source: flat array q, enters as sum w q div(w_test),
            the weak form of -grad q (q times identity in P)
        traction: dict edge -> (gx, gy) arrays or floats, applied on
            Neumann edges with boundary trapezoid quadrature
        """
        g = self.grid
        n = g.n_nodes
        w = self._w
        rx = np.zeros(n)
        ry = np.zeros(n)
        if body is not None:
            rx += w * body.ux
            ry += w * body.uy
        pxx = pyy = pxy = None
        if tensor_source is not None:
            pxx = w * tensor_source.xx
            pyy = w * tensor_source.yy
            pxy = w * tensor_source.xy
        if scalar_source is not None:
            q = w * np.asarray(scalar_source, dtype=float).ravel()
            pxx = q if pxx is None else pxx + q
            pyy = q if pyy is None else pyy + q
        if pxx is not None:
            zeros = np.zeros(n) if pxy is None else pxy
            rx += g.dx_op_t @ pxx + g.dy_op_t @ zeros
            ry += g.dy_op_t @ pyy + g.dx_op_t @ zeros
        if traction is not None:
            for edge, (gx, gy) in traction.items():
                if edge not in EDGES:
                    raise ValueError(f"unknown edge '{edge}'")
                if g.edge_tags[edge] != NEUMANN:
                    raise ValueError(f"traction given on non-neumann edge '{edge}'")
                bw = g.boundary_quad_weights(edge)
                rx += bw * (np.asarray(gx, dtype=float) * np.ones(n)).ravel()
                ry += bw * (np.asarray(gy, dtype=float) * np.ones(n)).ravel()
        free = self._free
        rx[~free] = 0.0
        ry[~free] = 0.0
        return rx, ry


def solve_elasticity(problem, rhs, tol=None, maxiter=None, x0=None):
    """CG solve of the displacement problem; returns (VectorField2, CGReport)."""
    g = problem.grid
    n = g.n_nodes
    rx, ry = rhs
    b = np.concatenate([rx, ry])

    def apply_a(v):
        ox, oy = problem.apply(v[:n], v[n:])
        return np.concatenate([ox, oy])

    x0v = None
    if x0 is not None:
        x0v = np.concatenate([x0.ux, x0.uy])
    x, report = conjugate_gradient(
        apply_a, b, diag=problem._diag,
        tol=problem.tol if tol is None else tol,
        maxiter=problem.maxiter if maxiter is None else maxiter,
        x0=x0v)
    free = problem._free
    ux = np.where(free, x[:n], 0.0)
    uy = np.where(free, x[n:], 0.0)
    return VectorField2(g, ux, uy), report
