"""Optimal control package."""
from ocp.problem import ConstraintSpec, OcpProblem, FineOperators, assemble_fine_operators, default_desired_state
from ocp.projection import project_K
from ocp.coarse import CoarseSystem, assemble_coarse
from ocp.solver import (
    OcpSolution,
    ProjectedGradientSolver,
    solve_ocp,
    solve_ocp_fine,
    fixed_point_defect,
    objective,
    auxiliary_states,
)

__all__ = [
    "ConstraintSpec",
    "OcpProblem",
    "FineOperators",
    "assemble_fine_operators",
    "default_desired_state",
    "project_K",
    "CoarseSystem",
    "assemble_coarse",
    "OcpSolution",
    "ProjectedGradientSolver",
    "solve_ocp",
    "solve_ocp_fine",
    "fixed_point_defect",
    "objective",
    "auxiliary_states",
]
