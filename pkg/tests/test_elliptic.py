import numpy as np
import pytest
import scipy.linalg

from chbsim.elliptic import (AUGMENTED, PLAIN, VISCO, EllipticProblem,
                             SolverFailure, conjugate_gradient,
                             solve_elasticity, solve_scalar_spd)
from chbsim.grid import VectorField2, flux_stiffness_matrix
from chbsim.oracle import densify
from conftest import FULL_DIRICHLET, MIXED, make_grid, make_material, smooth_phi


def _dense_stiffness(problem):
    """Assemble the (2n x 2n) operator by columns, free-dof restricted."""
    n = problem.grid.n_nodes
    mat = np.zeros((2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = 1.0
        kx, ky = problem.apply(e[:n], e[n:])
        mat[:n, j] = kx
        mat[n:, j] = ky
    return mat


def test_cg_identity_and_zero_rhs():
    rng = np.random.default_rng(0)
    b = rng.standard_normal(30)
    x, rep = conjugate_gradient(lambda v: v, b)
    assert np.allclose(x, b, atol=1e-12)
    x0, _ = conjugate_gradient(lambda v: v, np.zeros(30))
    assert np.array_equal(x0, np.zeros(30))


def test_cg_matches_dense_solve():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((25, 25))
    a = a @ a.T + 25 * np.eye(25)
    b = rng.standard_normal(25)
    x, rep = conjugate_gradient(lambda v: a @ v, b, diag=np.diag(a), tol=1e-12)
    assert np.allclose(x, np.linalg.solve(a, b), atol=1e-9)
    assert rep.iterations <= 25 + 5


def test_cg_failure_reports_residuals():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((40, 40))
    a = a @ a.T + 1e-3 * np.eye(40)
    with pytest.raises(SolverFailure) as exc:
        conjugate_gradient(lambda v: a @ v, rng.standard_normal(40),
                           tol=1e-14, maxiter=3)
    assert len(exc.value.residuals) > 0


def test_scalar_helmholtz_keeps_constants():
    g = make_grid(8, tags=MIXED)
    b = flux_stiffness_matrix(g, 1.0)
    w = g.quad_weights()
    dt = 1e-2

    def apply_a(v):
        return w * v + dt * (b @ v)

    c = 3.7 * np.ones(g.n_nodes)
    x, _ = solve_scalar_spd(apply_a, w * c, diag=w + dt * b.diagonal(), tol=1e-12)
    assert np.allclose(x, c, atol=1e-10)


def test_elasticity_zero_rhs_gives_zero():
    g = make_grid(8)
    m = make_material()
    prob = EllipticProblem(g, m, np.zeros(g.n_nodes))
    u, rep = solve_elasticity(prob, (np.zeros(g.n_nodes), np.zeros(g.n_nodes)))
    assert np.allclose(u.ux, 0.0) and np.allclose(u.uy, 0.0)


@pytest.mark.parametrize("variant", [PLAIN, AUGMENTED, VISCO])
def test_stiffness_symmetry_and_coercivity(variant):
    g = make_grid(8)
    m = make_material(rho=1)
    rng = np.random.default_rng(3)
    phi = smooth_phi(g, rng)
    prob = EllipticProblem(g, m, phi, variant=variant)
    n = g.n_nodes
    for _ in range(5):
        v = rng.standard_normal(2 * n)
        w = rng.standard_normal(2 * n)
        kvx, kvy = prob.apply(v[:n], v[n:])
        kwx, kwy = prob.apply(w[:n], w[n:])
        a = np.dot(np.concatenate([kvx, kvy]), w)
        b = np.dot(v, np.concatenate([kwx, kwy]))
        scale = max(1.0, abs(a))
        assert abs(a - b) <= 1e-10 * scale
    mat = _dense_stiffness(prob)
    free = np.concatenate([prob._free, prob._free])
    sub = mat[np.ix_(free, free)]
    eigs = scipy.linalg.eigvalsh(0.5 * (sub + sub.T))
    assert eigs.min() > 0.0


def test_elasticity_matches_dense_direct_solve():
    g = make_grid(8)
    m = make_material()
    rng = np.random.default_rng(4)
    phi = smooth_phi(g, rng)
    prob = EllipticProblem(g, m, phi, tol=1e-13, maxiter=40000)
    n = g.n_nodes
    rhs = rng.standard_normal(2 * n)
    free = np.concatenate([prob._free, prob._free])
    rhs[~free] = 0.0
    u, _ = solve_elasticity(prob, (rhs[:n], rhs[n:]))
    mat = _dense_stiffness(prob)
    sub = mat[np.ix_(free, free)]
    x = np.zeros(2 * n)
    x[free] = scipy.linalg.solve(sub, rhs[free], assume_a="sym")
    got = np.concatenate([u.ux, u.uy])
    assert np.max(np.abs(got - x)) <= 1e-8 * max(1.0, np.max(np.abs(x)))


def test_elasticity_mms_order():
    from chbsim.diagnostics import elasticity_mms
    _, orders = elasticity_mms(ns=(16, 32, 64))
    assert float(np.mean(orders)) >= 1.8


def test_inverse_norm_bracket_over_random_phases():
    """||K(phi)^-1|| stays within the bracket set by the Lame endpoint
    stiffnesses, uniformly over random phases with |phi| <= 1."""
    g = make_grid(8)
    m = make_material(lam_a=1.0, lam_b=2.0, mu_a=1.0, mu_b=2.0)
    lo = EllipticProblem(g, m, np.full(g.n_nodes, -50.0))   # soft endpoint
    hi = EllipticProblem(g, m, np.full(g.n_nodes, 50.0))    # stiff endpoint
    free = np.concatenate([lo._free, lo._free])

    def min_max_eig(problem):
        mat = _dense_stiffness(problem)
        sub = mat[np.ix_(free, free)]
        e = scipy.linalg.eigvalsh(0.5 * (sub + sub.T))
        return e[0], e[-1]

    lam_lo, _ = min_max_eig(lo)
    _, lam_hi = min_max_eig(hi)
    inv_hi = 1.0 / lam_lo     # upper bound on ||K^-1||
    inv_lo = 1.0 / lam_hi     # lower bound
    rng = np.random.default_rng(5)
    for _ in range(20):
        phi = smooth_phi(g, rng, amp=1.0)
        assert np.max(np.abs(phi)) <= 1.0
        e_min, e_max = min_max_eig(EllipticProblem(g, m, phi))
        inv_norm = 1.0 / e_min
        assert inv_lo * (1 - 1e-10) <= inv_norm <= inv_hi * (1 + 1e-10)


def test_traction_validated_on_neumann_edges():
    g = make_grid(8, tags=MIXED)
    m = make_material()
    prob = EllipticProblem(g, m, np.zeros(g.n_nodes))
    # traction on a Dirichlet edge is a contract violation
    with pytest.raises(ValueError):
        prob.assemble_rhs(traction={"left": (1.0, 0.0)})
    rx, ry = prob.assemble_rhs(traction={"right": (1.0, 0.0)})
    assert np.max(np.abs(rx)) > 0.0


def test_traction_loading_moves_boundary():
    g = make_grid(12, tags=MIXED)
    m = make_material(lam_a=1.0, lam_b=1.0, mu_a=1.0, mu_b=1.0, tau1=0.0)
    prob = EllipticProblem(g, m, np.zeros(g.n_nodes), tol=1e-12)
    rhs = prob.assemble_rhs(traction={"right": (0.1, 0.0)})
    u, _ = solve_elasticity(prob, rhs)
    right = g.edge_node_mask("right")
    assert np.mean(u.ux[right]) > 0.0   # pulled outward
    assert np.allclose(u.ux[g.dirichlet_mask()], 0.0)
