"""Coarse matrices of the projected-gradient iteration."""
import logging

import numpy as np
import scipy.sparse as sp

from fem.assembly import ControlLevel
from homog.basis import CoarseBasis
from ocp.problem import ConstraintSpec, FineOperators, OcpProblem

logger = logging.getLogger(__name__)


class CoarseSystem:
    """S, Q_c, D, M, F, Yd on span(Phi) and the control space of the chosen level."""

    def __init__(
        self,
        S: sp.csc_matrix,
        Q_c: sp.csc_matrix,
        D: sp.csc_matrix,
        M: sp.dia_matrix,
        F: np.ndarray,
        Yd: np.ndarray,
        basis: CoarseBasis,
        K: ConstraintSpec,
        control_prolongation: sp.csr_matrix,
        control_level: ControlLevel,
        yd_norm2: float = 0.0,
    ):
        self.S = S
        self.Q_c = Q_c
        self.D = D
        self.M = M
        self.F = F
        self.Yd = Yd
        self.basis = basis
        self.K = K
        self.control_prolongation = control_prolongation
        self.control_level = control_level
        self.yd_norm2 = yd_norm2

    @property
    def N(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def mass_diagonal(self) -> np.ndarray:
        return self.M.diagonal()

    def symmetry_defect(self) -> float:
        diff = self.S - self.S.T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def __repr__(self) -> str:
        return f"CoarseSystem(N={self.N}, m={self.m}, controls={self.control_level}, basis={self.basis.kind})"


def assemble_coarse(
    problem: OcpProblem,
    basis: CoarseBasis,
    fine: FineOperators,
    control_level: ControlLevel = "coarse",
) -> CoarseSystem:
    """Galerkin projection of the fine operators onto the basis columns.

    S = Phi^T A Phi, Q_c = Phi^T Q Phi, F = Phi^T f, Yd = Phi^T Q y_d and
    D = Phi^T D_fine R with R the coarse-to-fine control prolongation.
    """
    Phi = basis.matrix
    if Phi.shape[0] != fine.n_dofs:
        raise ValueError(f"Basis lives on {Phi.shape[0]} fine nodes, operators on {fine.n_dofs}")
    if problem.mesh.n_fine_nodes != fine.n_dofs:
        raise ValueError("Problem mesh and fine operators do not match")

    if control_level == "coarse":
        R = fine.R
        M = fine.M_coarse.full
    elif control_level == "fine":
        R = sp.identity(problem.mesh.n_fine_triangles, format="csr")
        M = fine.M_fine.full
    else:
        raise ValueError(f"Unknown control level '{control_level}' (expected 'fine' or 'coarse')")

    PhiT = Phi.T.tocsr()
    system = CoarseSystem(
        S=(PhiT @ fine.A.full @ Phi).tocsc(),
        Q_c=(PhiT @ fine.Q.full @ Phi).tocsc(),
        D=(PhiT @ fine.D_fine.full @ R).tocsc(),
        M=sp.dia_matrix(sp.diags(M.diagonal())),
        F=np.asarray(PhiT @ fine.f_vec).ravel(),
        Yd=np.asarray(PhiT @ fine.Qyd).ravel(),
        basis=basis,
        K=problem.K,
        control_prolongation=sp.csr_matrix(R),
        control_level=control_level,
        yd_norm2=fine.yd_norm2,
    )
    logger.info(f"Assembled {system}: S nnz={system.S.nnz}")
    return system
