import numpy as np

from chbsim.grid import Grid, DIRICHLET, NEUMANN
from chbsim.materials import MaterialModel

FULL_DIRICHLET = {"left": DIRICHLET, "right": DIRICHLET,
                  "bottom": DIRICHLET, "top": DIRICHLET}
MIXED = {"left": DIRICHLET, "right": NEUMANN,
         "bottom": DIRICHLET, "top": NEUMANN}


def make_grid(nx=8, ny=None, tags=None, lx=1.0, ly=1.0):
    if ny is None:
        ny = nx
    return Grid(nx, ny, lx, ly, dict(tags or FULL_DIRICHLET))


def make_material(**kw):
    """Coupled material with phase-dependent coefficients unless overridden."""
    params = dict(eps=0.2, rho=0, m0=1.0, m1=0.5, k0=1.0, k1=0.5,
                  M0=1.0, M1=0.5, a0=0.5, a1=0.2, psi_scale=1.0,
                  lam_a=1.0, lam_b=2.0, mu_a=1.0, mu_b=2.0,
                  lam_nu_a=1.0, lam_nu_b=1.5, mu_nu_a=1.0, mu_nu_b=1.5,
                  tau0=0.0, tau1=0.1)
    params.update(kw)
    return MaterialModel(**params)


def decoupled_material(**kw):
    """alpha = 0, M = 1: fluid and mechanics decouple."""
    params = dict(eps=0.2, rho=0, m0=1.0, m1=0.0, k0=1.0, k1=0.0,
                  M0=1.0, M1=0.0, a0=0.0, a1=0.0, psi_scale=1.0,
                  lam_a=1.0, lam_b=1.0, mu_a=1.0, mu_b=1.0,
                  tau0=0.0, tau1=0.0)
    params.update(kw)
    return MaterialModel(**params)


def smooth_phi(grid, rng, amp=0.8, modes=3):
    """Random smooth field in [-1, 1] (a few low Fourier-cosine modes)."""
    x, y = grid.coords()
    f = np.zeros(grid.n_nodes)
    for kx in range(modes):
        for ky in range(modes):
            f += rng.normal() * np.cos(kx * np.pi * x / grid.lx) \
                 * np.cos(ky * np.pi * y / grid.ly)
    return amp * np.tanh(f)
