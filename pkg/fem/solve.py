"""Sparse direct solves with homogeneous Dirichlet conditions."""
import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fem.assembly import SparseOperator

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


def factorize(matrix: sp.spmatrix, name: str = "matrix") -> spla.SuperLU:
    """SuperLU factorization; a singular matrix raises RuntimeError."""
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise RuntimeError(f"Factorization of {name} failed: {exc}") from exc


class DirichletSolver:
    """Factorizes the free block of an SPD operator once and solves many right-hand sides."""

    def __init__(self, operator: SparseOperator):
        self.operator = operator
        diag = operator.matrix.diagonal()
        if np.any(diag <= 0):
            raise RuntimeError(f"{operator.name} has non-positive diagonal entries; it is not SPD")
        self.lu = factorize(operator.matrix, operator.name)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve on the free DOFs; the returned vector has zeros on the eliminated DOFs."""
        rhs = np.asarray(rhs, dtype=float)
        n_full = self.operator.full.shape[0]
        if rhs.shape[0] != n_full:
            raise ValueError(f"Right-hand side has {rhs.shape[0]} entries, expected {n_full}")
        b = rhs[self.operator.row_dofs]
        z_free = self.lu.solve(b)
        if not np.all(np.isfinite(z_free)):
            raise RuntimeError(f"Solve with {self.operator.name} produced non-finite values")

        b_norm = np.linalg.norm(b)
        if b_norm > 0:
            if np.dot(z_free.ravel(), b.ravel()) <= 0:
                raise RuntimeError(f"{self.operator.name} is indefinite (z^T b <= 0)")
            residual = np.linalg.norm(self.operator.matrix @ z_free - b)
            if residual > RESIDUAL_TOL * b_norm:
                logger.warning(
                    f"Dirichlet solve residual {residual:.3e} exceeds {RESIDUAL_TOL:g} * |b| = {RESIDUAL_TOL * b_norm:.3e}"
                )

        z = np.zeros(rhs.shape)
        z[self.operator.col_dofs] = z_free
        return z


def solve_dirichlet(A: SparseOperator, b: np.ndarray, solver: Optional[DirichletSolver] = None) -> np.ndarray:
    """Solve A z = b on interior DOFs and pad with zero boundary values."""
    return (solver or DirichletSolver(A)).solve(b)
