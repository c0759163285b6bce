"""Distributed optimal control problem data and its fine-level operators.

The objective is fixed to the quadratic form

    J(y, u) = 1/2 ||y - y_d||^2 + 1/2 ||u||^2

subject to -div(a grad y) = f + B u in the domain, y = 0 on the boundary, and
u in the admissible set K.
"""
import logging
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, model_validator

from coeff.fields import CoefficientField
from fem.assembly import (
    ControlOperator,
    FieldSpec,
    SparseOperator,
    assemble_control_coupling,
    assemble_control_mass,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    interpolate,
    prolongation_matrix,
)
from mesh.hierarchy import MeshHierarchy, Rectangle

logger = logging.getLogger(__name__)

ConstraintKind = Literal["nonneg-mean", "box", "none"]


class ConstraintSpec(BaseModel):
    """Admissible control set K."""

    model_config = ConfigDict(frozen=True)

    kind: ConstraintKind = "nonneg-mean"
    lower: Optional[float] = None
    upper: Optional[float] = None

    @model_validator(mode="after")
    def _check_bounds(self) -> "ConstraintSpec":
        if self.kind == "box":
            if self.lower is None or self.upper is None:
                raise ValueError("box constraint needs both lower and upper bounds")
            if not np.isfinite(self.lower) or not np.isfinite(self.upper):
                raise ValueError("box bounds must be finite")
            if self.lower > self.upper:
                raise ValueError(f"box constraint lower={self.lower} exceeds upper={self.upper}")
        elif self.lower is not None or self.upper is not None:
            raise ValueError(f"bounds are only allowed for the box constraint, not '{self.kind}'")
        return self

    def label(self) -> str:
        if self.kind == "box":
            return f"box:{self.lower!r},{self.upper!r}"
        return self.kind


def default_desired_state(domain: Rectangle):
    """y_d = sin(pi x) sin(pi y), mapped onto the domain rectangle."""

    def y_d(x, y):
        return np.sin(np.pi * (x - domain.x0) / domain.width) * np.sin(np.pi * (y - domain.y0) / domain.height)

    return y_d


class OcpProblem:
    """Problem data on a mesh hierarchy: coefficient, forcing, target, control operator and K."""

    def __init__(
        self,
        mesh: MeshHierarchy,
        coeff: CoefficientField,
        f: FieldSpec = 1.0,
        y_d: Optional[FieldSpec] = None,
        B: Optional[ControlOperator] = None,
        K: Optional[ConstraintSpec] = None,
    ):
        self.mesh = mesh
        self.coeff = coeff
        self.f = f
        self.y_d = default_desired_state(mesh.domain) if y_d is None else y_d
        self.B = B or ControlOperator()
        self.K = K or ConstraintSpec()

    def __repr__(self) -> str:
        return f"OcpProblem(coeff={self.coeff.label}, K={self.K.label()}, {self.mesh.summary()})"


class FineOperators:
    """Everything assembled once on the fine mesh for one problem."""

    def __init__(
        self,
        A: SparseOperator,
        laplace: SparseOperator,
        Q: SparseOperator,
        M_fine: SparseOperator,
        M_coarse: SparseOperator,
        D_fine: SparseOperator,
        R: sp.csr_matrix,
        f_vec: np.ndarray,
        yd_nodal: np.ndarray,
    ):
        self.A = A
        self.laplace = laplace
        self.Q = Q
        self.M_fine = M_fine
        self.M_coarse = M_coarse
        self.D_fine = D_fine
        self.R = R
        self.f_vec = f_vec
        self.yd_nodal = yd_nodal
        self.Qyd = Q.full @ yd_nodal
        self.yd_norm2 = float(yd_nodal @ self.Qyd)

    @property
    def n_dofs(self) -> int:
        return self.A.full.shape[0]


def assemble_fine_operators(problem: OcpProblem) -> FineOperators:
    mesh = problem.mesh
    A = assemble_stiffness(mesh, problem.coeff)
    Q = assemble_mass(mesh)
    fine = FineOperators(
        A=A,
        laplace=assemble_stiffness(mesh, 1.0),
        Q=Q,
        M_fine=assemble_control_mass(mesh, "fine"),
        M_coarse=assemble_control_mass(mesh, "coarse"),
        D_fine=assemble_control_coupling(mesh, problem.B, "fine"),
        R=prolongation_matrix(mesh),
        f_vec=assemble_load(mesh, problem.f, Q),
        yd_nodal=interpolate(mesh, problem.y_d),
    )
    logger.info(f"Assembled fine operators: {fine.n_dofs} nodes, A nnz={A.full.nnz}")
    return fine
