"""Derived fields and the nonlinear right-hand sides of the fixed map.

The time integrator freezes the coefficient operators at the phase
field of the window start (phi0) and moves every remaining nonlinearity
to the right-hand side.  Writing the implicit window as

    x + dt * L(phi0) x = x_n + dt * F(x_k)

the F components are assembled here directly from the strong equations,
so a Picard fixed point solves the implicit-Euler discretization of the
full coupled system exactly:

  F_phi   = eps * Lap(m(phi0) Lap phi) + div(m(phi) grad mu) + S_phase
  F_theta = A0 theta + div(kappa(phi) grad p) + S_fluid     (elastic)
  F_theta = -div(kappa0 M0 grad theta) + div(kappa grad p) + S_fluid
                                                            (visco)
  F_u     = A0 u + udot,   Knu(phi) udot = weak(f, g) - E'W sigma_rest
                                                            (visco)

where mu and p are the derived chemical potential and pressure at the
current iterate, A0 is the corresponding frozen evolution operator, and
sigma_rest is the stress minus its viscous part.  Evaluating F through
the derived fields keeps every sign tied to the governing equations.
"""

from dataclasses import dataclass, field

import numpy as np

from .biot import STIFFNESS_SCALE, apply_fluid_operator
from .elliptic import AUGMENTED, VISCO, EllipticProblem, solve_elasticity
from .grid import ScalarField, SymTensorField, VectorField2, neumann_laplacian, symmetric_gradient


@dataclass
class SourceSpec:
    """External sources: phase and fluid scalars, body force, tractions.

    Scalar sources and the body force are callables (x, y, t) -> array
    (the body force returns a pair); traction maps Neumann edges to
    constant or nodal (gx, gy) data.  None means zero.
    """

    s_phase: object = None
    s_fluid: object = None
    body: object = None
    traction: dict = None

    def phase_at(self, grid, t):
        if self.s_phase is None:
            return None
        x, y = grid.coords()
        return np.asarray(self.s_phase(x, y, t), dtype=float)

    def fluid_at(self, grid, t):
        if self.s_fluid is None:
            return None
        x, y = grid.coords()
        return np.asarray(self.s_fluid(x, y, t), dtype=float)

    def body_at(self, grid, t):
        if self.body is None:
            return None
        x, y = grid.coords()
        fx, fy = self.body(x, y, t)
        return VectorField2(grid, np.broadcast_to(np.asarray(fx, dtype=float), x.shape).copy(),
                            np.broadcast_to(np.asarray(fy, dtype=float), x.shape).copy())


@dataclass
class SimState:
    """One point of the trajectory: phase, fluid content, displacement."""

    grid: object
    phi: np.ndarray
    theta: np.ndarray
    u: VectorField2
    t: float = 0.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        self.theta = np.asarray(self.theta, dtype=float).ravel()

    def copy(self):
        return SimState(self.grid, self.phi.copy(), self.theta.copy(), self.u.copy(), self.t)


# --- derived fields -------------------------------------------------------


def pressure(material, phi, theta, div_u):
    """p = M(phi) (theta - alpha(phi) div u)."""
    return material.biot_modulus(phi) * (theta - material.biot_alpha(phi) * div_u)


def eigenstrain_tensor_source(material, phi):
    """Isotropic scalar P with P I = C(phi) T(phi) (model stiffness scale).

    Used as the scalar tensor-source of the displacement right-hand
    side: -div(C T) enters weakly as + sum w P div(w_test).
    """
    lam, mu = material.lame(phi)
    tau = material.tau(phi)
    return STIFFNESS_SCALE * (2.0 * mu + 2.0 * lam) * tau


def chemical_potential(grid, material, phi, theta, u):
    """mu = -eps Lap phi + psi'(phi)/eps + W_phi + coupling terms.

    The coupling terms are the phase derivatives of the fluid energy
    density (M/2)(theta - alpha div u)^2:
      (M'/2)(theta - alpha div u)^2 - M (theta - alpha div u) alpha' div u.
    """
    strain = symmetric_gradient(u)
    div_u = strain.trace()
    lap_phi = neumann_laplacian(ScalarField(grid, phi), 1.0).values
    _, _, _, w_phi = material.elastic_density_derivatives(
        phi, strain.xx, strain.yy, strain.xy)
    zeta = theta - material.biot_alpha(phi) * div_u
    m_d = material.biot_modulus(phi, deriv=1)
    a_d = material.biot_alpha(phi, deriv=1)
    bm = material.biot_modulus(phi)
    mu_chem = (-material.eps * lap_phi
               + material.psi_d(phi) / material.eps
               + w_phi
               + 0.5 * m_d * zeta**2
               - bm * zeta * a_d * div_u)
    return mu_chem


def stress(grid, material, phi, theta, u, strain_rate=None):
    """Total stress sigma = W_E + rho C_nu E(du/dt) - alpha M zeta I."""
    strain = symmetric_gradient(u)
    w_exx, w_eyy, w_exy, _ = material.elastic_density_derivatives(
        phi, strain.xx, strain.yy, strain.xy)
    zeta = theta - material.biot_alpha(phi) * strain.trace()
    piso = material.biot_alpha(phi) * material.biot_modulus(phi) * zeta
    sxx = w_exx - piso
    syy = w_eyy - piso
    sxy = w_exy
    if material.rho == 1 and strain_rate is not None:
        lam_nu, mu_nu = material.lame_visco(phi)
        tr = strain_rate.trace()
        sxx = sxx + 2.0 * mu_nu * strain_rate.xx + lam_nu * tr
        syy = syy + 2.0 * mu_nu * strain_rate.yy + lam_nu * tr
        sxy = sxy + 2.0 * mu_nu * strain_rate.xy
    return SymTensorField(grid, sxx, syy, sxy)


def rest_stress(grid, material, phi, theta, u):
    """sigma minus its viscous part: W_E - alpha M zeta I (visco regime rhs)."""
    return stress(grid, material, phi, theta, u, strain_rate=None)


# --- displacement reconstruction (elastic regime) -------------------------


def displacement_problem(grid, material, phi, tol=1e-12, maxiter=40000):
    """Augmented quasi-static displacement problem at phase phi."""
    return EllipticProblem(grid, material, phi, variant=AUGMENTED,
                           scale=STIFFNESS_SCALE, tol=tol, maxiter=maxiter)


def reconstruct_displacement(problem, material, theta, sources, t, x0=None):
    """Solve the quasi-static displacement for given phase and content.

    u = Ctilde(phi)^{-1}( -div(C T + alpha M theta I) + f, g ).
    """
    phi = problem.phi
    scalar = (eigenstrain_tensor_source(material, phi)
              + material.biot_alpha(phi) * material.biot_modulus(phi) * theta)
    rhs = problem.assemble_rhs(
        body=sources.body_at(problem.grid, t) if sources is not None else None,
        scalar_source=scalar,
        traction=sources.traction if sources is not None else None)
    u, report = solve_elasticity(problem, rhs, x0=x0)
    return u, report


# --- right-hand sides -----------------------------------------------------


def phase_rhs(grid, material, phi0, phi, mu_chem, s_phase):
    """F_phi = eps Lap(m(phi0) Lap phi) + div(m(phi) grad mu) + S_phase."""
    lap_phi = neumann_laplacian(ScalarField(grid, phi), 1.0).values
    m0 = material.mobility(phi0)
    stiff = material.eps * neumann_laplacian(
        ScalarField(grid, m0 * lap_phi), 1.0).values
    transport = neumann_laplacian(
        ScalarField(grid, mu_chem), material.mobility(phi)).values
    out = stiff + transport
    if s_phase is not None:
        out = out + s_phase
    return out


def rhs_elastic(grid, material, ctx0, phi, theta, u, sources, t):
    """(F_phi, F_theta) for the quasi-static regime at one Picard iterate.

    u must be the displacement reconstructed at (phi, theta); ctx0 is
    the frozen-phase operator context of the window start.
    """
    mu_chem = chemical_potential(grid, material, phi, theta, u)
    f_phi = phase_rhs(grid, material, ctx0.phi, phi, mu_chem,
                      sources.phase_at(grid, t) if sources is not None else None)
    div_u = (grid.dx_op @ u.ux) + (grid.dy_op @ u.uy)
    p = pressure(material, phi, theta, div_u)
    f_theta = (apply_fluid_operator(ctx0, theta)
               + neumann_laplacian(ScalarField(grid, p),
                                   material.permeability(phi)).values)
    if sources is not None:
        s_fluid = sources.fluid_at(grid, t)
        if s_fluid is not None:
            f_theta = f_theta + s_fluid
    return f_phi, f_theta


@dataclass
class ViscoOperators:
    """Frozen-phase operators for the Kelvin-Voigt regime."""

    grid: object
    material: object
    phi0: np.ndarray
    tol: float = 1e-12
    maxiter: int = 40000

    def __post_init__(self):
        self.phi0 = np.asarray(self.phi0, dtype=float).ravel()
        # visco stiffness at phi0 (for A0 and the implicit u-substep)
        self.visco0 = EllipticProblem(
            self.grid, self.material, self.phi0, variant=VISCO,
            scale=STIFFNESS_SCALE, tol=self.tol, maxiter=self.maxiter)
        # elastic stiffness at phi0, model scale
        self.elastic0 = EllipticProblem(
            self.grid, self.material, self.phi0, scale=STIFFNESS_SCALE,
            tol=self.tol, maxiter=self.maxiter)
        self.kappa_m0 = (self.material.permeability(self.phi0)
                         * self.material.biot_modulus(self.phi0))
        self._warm = {}

    def apply_a0(self, u):
        """A0 u = Knu(phi0)^{-1} K(phi0) u."""
        kx, ky = self.elastic0.apply(u.ux, u.uy)
        sol, _ = solve_elasticity(self.visco0, (kx, ky), x0=self._warm.get("a0"))
        self._warm["a0"] = sol
        return sol


def rhs_visco(grid, material, ctx_ops, phi, theta, u, sources, t):
    """(F_phi, F_u, F_theta) for the visco-elastic regime at one iterate.

    ctx_ops is a ViscoOperators bundle frozen at the window start.
    """
    mu_chem = chemical_potential(grid, material, phi, theta, u)
    f_phi = phase_rhs(grid, material, ctx_ops.phi0, phi, mu_chem,
                      sources.phase_at(grid, t) if sources is not None else None)

    # displacement velocity: Knu(phi) E(udot) balances f, g and sigma_rest
    sigma_rest = rest_stress(grid, material, phi, theta, u)
    visco_phi = EllipticProblem(
        grid, material, phi, variant=VISCO, scale=STIFFNESS_SCALE,
        tol=ctx_ops.tol, maxiter=ctx_ops.maxiter)
    rhs_ext = visco_phi.assemble_rhs(
        body=sources.body_at(grid, t) if sources is not None else None,
        traction=sources.traction if sources is not None else None)
    rhs_sig = visco_phi.assemble_rhs(tensor_source=sigma_rest)
    udot, _ = solve_elasticity(
        visco_phi, (rhs_ext[0] - rhs_sig[0], rhs_ext[1] - rhs_sig[1]),
        x0=ctx_ops._warm.get("udot"))
    ctx_ops._warm["udot"] = udot
    a0u = ctx_ops.apply_a0(u)
    f_u = VectorField2(grid, a0u.ux + udot.ux, a0u.uy + udot.uy)

    div_u = (grid.dx_op @ u.ux) + (grid.dy_op @ u.uy)
    p = pressure(material, phi, theta, div_u)
    f_theta = (-neumann_laplacian(ScalarField(grid, theta), ctx_ops.kappa_m0).values
               + neumann_laplacian(ScalarField(grid, p),
                                   material.permeability(phi)).values)
    if sources is not None:
        s_fluid = sources.fluid_at(grid, t)
        if s_fluid is not None:
            f_theta = f_theta + s_fluid
    return f_phi, f_u, f_theta
