"""Linearize-and-contract time integration.

Each implicit-Euler window of length dt freezes the coefficient
operators at the window-start phase field phi0 and iterates the Picard
fixed-point map

    x_{k+1} = (I + dt L(phi0))^{-1} ( x_n + dt F(x_k) ),

where L collects the frozen linear evolution operators and F the
right-hand sides from chbsim.rhs.  The linear substeps are:

  phase:      (I + dt eps Lap(m(phi0) Lap .)) phi = r,
              solved as the SPD system (W + dt eps B1 D_m W^{-1} B1)
  content:    (I + dt A(phi0)) theta = r in the quasi-static regime,
              solved in the conjugate pressure variable q:
              (W B(phi0) + dt B_kappa) q = W r, theta = r + dt NL(q)
  content:    (W + dt B_{kappa M}) theta = W r in the visco regime
  displacement: (K_nu + dt K) u = K_nu (u_n + dt F_u) in the visco
              regime (displacement is reconstructed, not evolved, in
              the quasi-static regime)

All systems are symmetric positive definite and solved by
Jacobi-preconditioned CG; inner (nested) solves run two orders tighter
than the outer linear tolerance.  The iteration residual is the
weighted-L2 norm of the state update; the contraction estimate rho is
the median of successive residual ratios.  A window that fails to
contract is retried with dt scaled down by shrink_factor.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .biot import BiotContext, apply_B_tilde
from .elliptic import PLAIN, VISCO, EllipticProblem, SolverFailure, conjugate_gradient, solve_elasticity
from .grid import ScalarField, VectorField2, flux_stiffness_matrix, neumann_laplacian
from .rhs import (SimState, chemical_potential, displacement_problem,
                  eigenstrain_tensor_source, phase_rhs, pressure,
                  reconstruct_displacement, rhs_elastic, rhs_visco,
                  ViscoOperators)

THETA_FORM = "theta"
PRESSURE_FORM = "pressure"


class StepFailure(RuntimeError):
    """A window failed to converge even after all allowed dt shrinks."""


@dataclass
class StepperConfig:
    dt: float = 1e-3
    t_end: float = 1e-2
    tol_picard: float = 1e-9
    max_picard: int = 40
    shrink_factor: float = 0.5
    max_shrinks: int = 10
    tol_lin: float = 1e-10
    max_lin: int = 20000
    refresh_linearization: bool = True
    formulation: str = THETA_FORM

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("dt must be positive and t_end nonnegative")
        if not (0 < self.shrink_factor < 1):
            raise ValueError("shrink_factor must lie in (0, 1)")
        if self.formulation not in (THETA_FORM, PRESSURE_FORM):
            raise ValueError(f"unknown formulation '{self.formulation}'")

    @property
    def tol_inner(self):
        """Nested (inner) solver tolerance: two orders tighter than outer."""
        return self.tol_lin * 1e-2


@dataclass
class PicardReport:
    iterations: int
    residual: float
    residuals: list
    rho: float
    converged: bool
    dt_used: float
    shrinks: int


def _median_ratio(residuals):
    ratios = [residuals[i + 1] / residuals[i]
              for i in range(len(residuals) - 1) if residuals[i] > 0]
    if not ratios:
        return 0.0
    return float(np.median(ratios))


def _wnorm2(w, v):
    return float(np.dot(w, v * v))


# --- frozen operator bundles ---------------------------------------------


@dataclass
class FrozenElastic:
    """Window-frozen operators for the quasi-static regime."""

    grid: object
    material: object
    phi0: np.ndarray
    tol_inner: float
    max_lin: int

    def __post_init__(self):
        import scipy.sparse as sp
        self.phi0 = np.asarray(self.phi0, dtype=float).ravel()
        self.ctx0 = BiotContext(self.grid, self.material, self.phi0,
                                tol=self.tol_inner, maxiter=self.max_lin)
        self.b_one = flux_stiffness_matrix(self.grid, 1.0)
        self.b_kappa = flux_stiffness_matrix(self.grid, self.ctx0.kappa)
        self.m0 = self.material.mobility(self.phi0)
        self.w = self.grid.quad_weights()
        # coupling matrix G v = W alpha0 div v (used by the content substep)
        g = self.grid
        da = sp.diags(self.w * self.ctx0.alpha)
        self.g_mat = sp.hstack([da @ g.dx_op, da @ g.dy_op], format="csr")
        self.g_mat_t = self.g_mat.T.tocsr()
        self._z_cache = {}

    def z_matrix(self, dt):
        """Sparse SPD pressure block Z = W/M + dt B_kappa, factorized.

        Returns (Z, solve) where solve applies Z^{-1} via a cached
        sparse direct factorization (the block is small and banded, so
        an exact inner solve is cheaper than nested iteration).
        """
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla
        if dt not in self._z_cache:
            z = (sp.diags(self.w / self.ctx0.modulus) + dt * self.b_kappa).tocsr()
            self._z_cache[dt] = (z, spla.factorized(z.tocsc()))
        return self._z_cache[dt]


@dataclass
class FrozenVisco:
    """Window-frozen operators for the Kelvin-Voigt regime."""

    grid: object
    material: object
    phi0: np.ndarray
    tol_inner: float
    max_lin: int

    def __post_init__(self):
        self.phi0 = np.asarray(self.phi0, dtype=float).ravel()
        self.ops = ViscoOperators(self.grid, self.material, self.phi0,
                                  tol=self.tol_inner, maxiter=self.max_lin)
        self.b_one = flux_stiffness_matrix(self.grid, 1.0)
        self.b_km = flux_stiffness_matrix(self.grid, self.ops.kappa_m0)
        self.m0 = self.material.mobility(self.phi0)
        self.w = self.grid.quad_weights()
        self._shifted = {}

    def shifted_problem(self, dt):
        prob = self._shifted.get(dt)
        if prob is None:
            prob = EllipticProblem(
                self.grid, self.material, self.phi0, variant=VISCO,
                scale=2.0, shift=dt, tol=self.tol_inner, maxiter=self.max_lin)
            self._shifted[dt] = prob
        return prob


# --- linear substeps ------------------------------------------------------


def linear_substep_phi(frozen, dt, r, tol, maxiter, x0=None):
    """Solve (I + dt eps Lap(m(phi0) Lap .)) phi = r (SPD symmetrized)."""
    w = frozen.w
    eps = frozen.material.eps
    b_one = frozen.b_one
    scale = dt * eps

    def apply_a(v):
        return w * v + scale * (b_one @ (frozen.m0 * (b_one @ v) / w))

    diag = w + scale * (b_one.power(2) @ (frozen.m0 / w))
    x, rep = conjugate_gradient(apply_a, w * r, diag=diag, tol=tol,
                                maxiter=maxiter, x0=x0)
    # the exact solution has the same weighted mean as r (the flux term
    # is mean-free); restore the invariant lost to the CG residual
    x += np.dot(w, r - x) / w.sum()
    return x, rep


def _solve_conjugate_pressure(frozen, dt, rhs_w, tol, tol_inner, maxiter, x0=None):
    """Solve (W B(phi0) + dt B_kappa) q = rhs_w for the pressure-like q.

    Unfolds the content/pressure operator into the equivalent coupled
    system in (q, v) and eliminates q, leaving the SPD displacement
    Schur complement  (K + G' Z^{-1} G) v = G' Z^{-1} rhs_w  with the
    sparse pressure block Z = W/M + dt B_kappa.  This avoids nesting a
    full elasticity solve inside every outer CG iteration; the Z block
    is banded and solved exactly by a cached direct factorization.
    """
    z, z_solve = frozen.z_matrix(dt)
    z_diag = z.diagonal()
    n = frozen.grid.n_nodes
    prob = frozen.ctx0.plain

    free2 = np.concatenate([prob._free, prob._free])

    def apply_s(v):
        v = np.where(free2, v, 0.0)
        kx, ky = prob.apply(v[:n], v[n:])
        out = np.concatenate([kx, ky])
        out += frozen.g_mat_t @ z_solve(frozen.g_mat @ v)
        return np.where(free2, out, 0.0)

    gt2 = frozen.g_mat.power(2)
    diag_s = prob._diag + gt2.T @ (1.0 / z_diag)
    diag_s = np.where(free2, diag_s, 1.0)
    b_v = frozen.g_mat_t @ z_solve(rhs_w)
    b_v = np.where(free2, b_v, 0.0)
    x0v = None if x0 is None else x0
    v, rep = conjugate_gradient(apply_s, b_v, diag=diag_s, tol=tol,
                                maxiter=maxiter, x0=x0v)
    q = z_solve(rhs_w - frozen.g_mat @ v)
    return q, v, rep


def linear_substep_theta_elastic(frozen, dt, r, tol, maxiter, x0=None,
                                 tol_inner=None):
    """Solve (I + dt A(phi0)) theta = r via the conjugate pressure q.

    Returns (theta, q-solve warm data).  theta is recovered from the
    flux form theta = r + dt NL(q, kappa0), which conserves the
    weighted mean of r exactly.
    """
    w = frozen.w
    b_k = frozen.b_kappa
    if tol_inner is None:
        tol_inner = tol * 1e-2
    q, v, rep = _solve_conjugate_pressure(frozen, dt, w * r, tol, tol_inner,
                                          maxiter, x0=x0)
    theta = r - dt * (b_k @ q) / w
    return theta, v, rep


def linear_substep_theta_visco(frozen, dt, r, tol, maxiter, x0=None):
    """Solve (I + dt L_{kappa M}) theta = r (SPD symmetrized)."""
    w = frozen.w
    b_km = frozen.b_km

    def apply_a(v):
        return w * v + dt * (b_km @ v)

    diag = w + dt * b_km.diagonal()
    x, rep = conjugate_gradient(apply_a, w * r, diag=diag, tol=tol,
                                maxiter=maxiter, x0=x0)
    x += np.dot(w, r - x) / w.sum()
    return x, rep


def linear_substep_u_visco(frozen, dt, u_n, f_u, x0=None):
    """Solve (K_nu + dt K)(phi0) u = K_nu(phi0) (u_n + dt F_u)."""
    g = frozen.grid
    vx = u_n.ux + dt * f_u.ux
    vy = u_n.uy + dt * f_u.uy
    rhs = frozen.ops.visco0.apply(vx, vy)
    prob = frozen.shifted_problem(dt)
    u, rep = solve_elasticity(prob, rhs, x0=x0)
    return u, rep


# --- Picard windows -------------------------------------------------------


def _converged_scale(w, state):
    s = 1.0 + np.sqrt(_wnorm2(w, state.phi)) + np.sqrt(_wnorm2(w, state.theta))
    return s


def picard_window(grid, material, state, sources, cfg, frozen=None):
    """Advance one window; returns (new_state, PicardReport, frozen).

    frozen carries the window linearization; pass the previous bundle
    with cfg.refresh_linearization = False to keep the global frozen
    operators of a paper-faithful fixed linearization.
    """
    if material.rho == 1:
        return _picard_window_visco(grid, material, state, sources, cfg, frozen)
    if cfg.formulation == PRESSURE_FORM:
        return _picard_window_pressure(grid, material, state, sources, cfg, frozen)
    return _picard_window_elastic(grid, material, state, sources, cfg, frozen)


def _shrink_loop(cfg, attempt_fn):
    dt = cfg.dt
    shrinks = 0
    while True:
        try:
            result = attempt_fn(dt)
        except SolverFailure:
            result = None
        if result is not None:
            new_state, residuals = result
            rep = PicardReport(
                iterations=len(residuals), residual=residuals[-1] if residuals else 0.0,
                residuals=residuals, rho=_median_ratio(residuals),
                converged=True, dt_used=dt, shrinks=shrinks)
            return new_state, rep
        shrinks += 1
        if shrinks > cfg.max_shrinks:
            raise StepFailure(
                f"window at t = {cfg.t_end} failed after {cfg.max_shrinks} dt shrinks")
        dt *= cfg.shrink_factor


def _picard_window_elastic(grid, material, state, sources, cfg, frozen):
    if frozen is None:
        frozen = FrozenElastic(grid, material, state.phi, cfg.tol_inner, cfg.max_lin)
    w = frozen.w
    scale = _converged_scale(w, state)

    def attempt(dt):
        t_new = state.t + dt
        phi_k, theta_k, u_k = state.phi, state.theta, state.u
        residuals = []
        q_warm = None
        phi_warm = None
        for _ in range(cfg.max_picard):
            f_phi, f_theta = rhs_elastic(
                grid, material, frozen.ctx0, phi_k, theta_k, u_k, sources, t_new)
            phi_new, _ = linear_substep_phi(
                frozen, dt, state.phi + dt * f_phi, cfg.tol_lin, cfg.max_lin,
                x0=phi_warm)
            theta_new, q_warm, _ = linear_substep_theta_elastic(
                frozen, dt, state.theta + dt * f_theta, cfg.tol_lin, cfg.max_lin,
                x0=q_warm)
            problem = displacement_problem(grid, material, phi_new,
                                           tol=cfg.tol_inner, maxiter=cfg.max_lin)
            u_new, _ = reconstruct_displacement(problem, material, theta_new,
                                                sources, t_new, x0=u_k)
            delta = np.sqrt(_wnorm2(w, phi_new - phi_k) + _wnorm2(w, theta_new - theta_k))
            residuals.append(delta)
            phi_k, theta_k, u_k = phi_new, theta_new, u_new
            phi_warm = phi_new
            if delta <= cfg.tol_picard * scale:
                return SimState(grid, phi_k, theta_k, u_k, t_new), residuals
        return None

    new_state, rep = _shrink_loop(cfg, attempt)
    return new_state, rep, frozen


def _picard_window_pressure(grid, material, state, sources, cfg, frozen):
    """Quasi-static window iterated in the pressure variable.

    Independent route for cross-checking: displacement solves use the
    plain (unaugmented) stiffness with -grad(alpha p) loading, and the
    fluid content is carried implicitly through
    theta = p / M + alpha div u.
    """
    if frozen is None:
        frozen = FrozenElastic(grid, material, state.phi, cfg.tol_inner, cfg.max_lin)
    w = frozen.w
    scale = _converged_scale(w, state)
    div0 = (grid.dx_op @ state.u.ux) + (grid.dy_op @ state.u.uy)
    p_start = pressure(material, state.phi, state.theta, div0)

    def solve_u(phi, p, x0, t):
        prob = EllipticProblem(grid, material, phi, variant=PLAIN, scale=2.0,
                               tol=cfg.tol_inner, maxiter=cfg.max_lin)
        scalar = eigenstrain_tensor_source(material, phi) + material.biot_alpha(phi) * p
        rhs = prob.assemble_rhs(
            body=sources.body_at(grid, t) if sources is not None else None,
            scalar_source=scalar,
            traction=sources.traction if sources is not None else None)
        u, _ = solve_elasticity(prob, rhs, x0=x0)
        return u

    def content_of(phi, p, u):
        div_u = (grid.dx_op @ u.ux) + (grid.dy_op @ u.uy)
        return p / material.biot_modulus(phi) + material.biot_alpha(phi) * div_u

    def attempt(dt):
        t_new = state.t + dt
        phi_k, p_k = state.phi, p_start
        u_k = solve_u(phi_k, p_k, state.u, t_new)
        residuals = []
        phi_warm = None
        p_warm = None
        b_k0 = frozen.b_kappa
        for _ in range(cfg.max_picard):
            # phase update through the pressure form of the potential
            zeta = p_k / material.biot_modulus(phi_k)
            theta_like = zeta + material.biot_alpha(phi_k) * (
                (grid.dx_op @ u_k.ux) + (grid.dy_op @ u_k.uy))
            mu_chem = chemical_potential(grid, material, phi_k, theta_like, u_k)
            f_phi = phase_rhs(grid, material, frozen.phi0, phi_k, mu_chem,
                              sources.phase_at(grid, t_new) if sources is not None else None)
            phi_new, _ = linear_substep_phi(
                frozen, dt, state.phi + dt * f_phi, cfg.tol_lin, cfg.max_lin,
                x0=phi_warm)
            # pressure update: theta(p) = B0 p + c_k, frozen permeability
            c_k = content_of(phi_k, p_k, u_k) - apply_B_tilde(frozen.ctx0, p_k)
            extra = (neumann_laplacian(ScalarField(grid, p_k),
                                       material.permeability(phi_k)).values
                     + (b_k0 @ p_k) / w)   # NL(p, kappa(phi)) - NL(p, kappa0)
            r = state.theta - c_k + dt * extra
            s_fluid = sources.fluid_at(grid, t_new) if sources is not None else None
            if s_fluid is not None:
                r = r + dt * s_fluid

            p_new, p_warm_v, _ = _solve_conjugate_pressure(
                frozen, dt, w * r, cfg.tol_lin, cfg.tol_inner, cfg.max_lin,
                x0=p_warm)
            u_new = solve_u(phi_new, p_new, u_k, t_new)
            delta = np.sqrt(_wnorm2(w, phi_new - phi_k) + _wnorm2(w, p_new - p_k))
            residuals.append(delta)
            phi_k, p_k, u_k = phi_new, p_new, u_new
            phi_warm, p_warm = phi_new, p_warm_v
            if delta <= cfg.tol_picard * scale:
                theta = content_of(phi_k, p_k, u_k)
                return SimState(grid, phi_k, theta, u_k, t_new), residuals
        return None

    new_state, rep = _shrink_loop(cfg, attempt)
    return new_state, rep, frozen


def _picard_window_visco(grid, material, state, sources, cfg, frozen):
    if frozen is None:
        frozen = FrozenVisco(grid, material, state.phi, cfg.tol_inner, cfg.max_lin)
    w = frozen.w
    scale = _converged_scale(w, state) + np.sqrt(
        _wnorm2(w, state.u.ux) + _wnorm2(w, state.u.uy))

    def attempt(dt):
        t_new = state.t + dt
        phi_k, theta_k, u_k = state.phi, state.theta, state.u
        residuals = []
        phi_warm = None
        theta_warm = None
        for _ in range(cfg.max_picard):
            f_phi, f_u, f_theta = rhs_visco(
                grid, material, frozen.ops, phi_k, theta_k, u_k, sources, t_new)
            phi_new, _ = linear_substep_phi(
                frozen, dt, state.phi + dt * f_phi, cfg.tol_lin, cfg.max_lin,
                x0=phi_warm)
            theta_new, _ = linear_substep_theta_visco(
                frozen, dt, state.theta + dt * f_theta, cfg.tol_lin, cfg.max_lin,
                x0=theta_warm)
            u_new, _ = linear_substep_u_visco(frozen, dt, state.u, f_u, x0=u_k)
            delta = np.sqrt(
                _wnorm2(w, phi_new - phi_k) + _wnorm2(w, theta_new - theta_k)
                + _wnorm2(w, u_new.ux - u_k.ux) + _wnorm2(w, u_new.uy - u_k.uy))
            residuals.append(delta)
            phi_k, theta_k, u_k = phi_new, theta_new, u_new
            phi_warm, theta_warm = phi_new, theta_new
            if delta <= cfg.tol_picard * scale:
                return SimState(grid, phi_k, theta_k, u_k, t_new), residuals
        return None

    new_state, rep = _shrink_loop(cfg, attempt)
    return new_state, rep, frozen


# --- driver ---------------------------------------------------------------


def initial_state(grid, material, phi, theta, sources=None, u_init="quasistatic",
                  tol=1e-12):
    """Assemble a consistent initial state.

    u_init = 'quasistatic' reconstructs the displacement from (phi,
    theta); 'zero' starts from u = 0 (visco regime only).
    """
    phi = np.asarray(phi, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    if u_init == "zero":
        u = VectorField2.zero(grid)
    elif u_init == "quasistatic":
        problem = displacement_problem(grid, material, phi, tol=tol)
        u, _ = reconstruct_displacement(problem, material, theta, sources, 0.0)
    else:
        raise ValueError(f"unknown u_init '{u_init}'")
    return SimState(grid, phi, theta, u, 0.0)


def run_simulation(grid, material, cfg, state, sources=None, observer=None):
    """March windows until t_end; returns (states, reports).

    states[0] is the initial state; one entry is appended per accepted
    window.  observer(state, report), when given, is called after each
    window (the CLI uses it for output).
    """
    states = [state]
    reports = []
    frozen = None
    t = state.t
    while t < cfg.t_end - 1e-12 * max(1.0, cfg.t_end):
        dt = min(cfg.dt, cfg.t_end - t)
        wcfg = replace(cfg, dt=dt)
        if cfg.refresh_linearization:
            frozen = None
        state, rep, frozen = picard_window(grid, material, state, sources, wcfg, frozen)
        t = state.t
        states.append(state)
        reports.append(rep)
        if observer is not None:
            observer(state, rep)
    return states, reports
