"""Structured-grid simulator for a coupled phase-field poro-elasticity model.

Subpackages follow the pipeline: grid and discrete operators, material
laws, matrix-free elliptic solves, conjugate fluid-content/pressure
operators, nonlinear right-hand sides, the fixed-point time stepper,
dense reference oracles, diagnostics, and the command-line front end.
"""

from .grid import (
    DIRICHLET,
    NEUMANN,
    Grid,
    ScalarField,
    SymTensorField,
    VectorField2,
    divergence,
    gradient,
    neumann_laplacian,
    symmetric_gradient,
)
from .materials import MaterialModel

__all__ = [
    "DIRICHLET",
    "NEUMANN",
    "Grid",
    "ScalarField",
    "SymTensorField",
    "VectorField2",
    "MaterialModel",
    "divergence",
    "gradient",
    "neumann_laplacian",
    "symmetric_gradient",
]
