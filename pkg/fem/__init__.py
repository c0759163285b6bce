"""Finite element package."""
from fem.assembly import (
    SparseOperator,
    ControlOperator,
    assemble_stiffness,
    assemble_mass,
    assemble_control_mass,
    assemble_control_coupling,
    assemble_load,
    prolongation_matrix,
    interpolate,
    element_stiffness,
    element_energies,
)
from fem.solve import DirichletSolver, solve_dirichlet, factorize
from fem.norms import error_norms, norms, control_norm, relative_control_error, project_average

__all__ = [
    "SparseOperator",
    "ControlOperator",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_control_mass",
    "assemble_control_coupling",
    "assemble_load",
    "prolongation_matrix",
    "interpolate",
    "element_stiffness",
    "element_energies",
    "DirichletSolver",
    "solve_dirichlet",
    "factorize",
    "error_norms",
    "norms",
    "control_norm",
    "relative_control_error",
    "project_average",
]
