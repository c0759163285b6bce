"""P1 assembly on the fine triangulation and piecewise-constant control spaces.

All element integrals use the exact constant-gradient formulas; the
coefficient and control multiplier are sampled once per triangle at the
barycenter.
"""
import logging
from typing import Callable, Literal, Optional, Union

import numpy as np
import scipy.sparse as sp

from coeff.fields import CoefficientField
from mesh.hierarchy import MeshHierarchy

logger = logging.getLogger(__name__)

ControlLevel = Literal["fine", "coarse"]
FieldSpec = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray]


class SparseOperator:
    """Assembled operator: `full` over every DOF, `matrix` restricted to the free rows/columns."""

    def __init__(
        self,
        full: sp.spmatrix,
        row_dofs: np.ndarray,
        col_dofs: np.ndarray,
        name: str,
        symmetric: bool = True,
        coefficient_samples: Optional[np.ndarray] = None,
    ):
        self.full = full.tocsr()
        self.row_dofs = row_dofs
        self.col_dofs = col_dofs
        self.name = name
        self.symmetric = symmetric
        self.coefficient_samples = coefficient_samples
        self.matrix = self.full[row_dofs][:, col_dofs].tocsc()

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    def symmetry_defect(self) -> float:
        diff = self.full - self.full.T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def __repr__(self) -> str:
        return f"SparseOperator({self.name}, {self.n_rows}x{self.n_cols}, nnz={self.matrix.nnz})"


class ControlOperator:
    """The control-to-source operator B: identity or multiplication by c(x)."""

    def __init__(self, multiplier: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None):
        self.multiplier = multiplier

    @property
    def is_identity(self) -> bool:
        return self.multiplier is None

    def sample(self, points: np.ndarray) -> np.ndarray:
        if self.multiplier is None:
            return np.ones(points.shape[0])
        values = np.broadcast_to(self.multiplier(points[:, 0], points[:, 1]), (points.shape[0],)).astype(float)
        if not np.all(np.isfinite(values)):
            raise ValueError("Control multiplier c(x) is not finite at every fine triangle")
        return values


def triangle_gradients(nodes: np.ndarray, triangles: np.ndarray):
    """Areas and constant hat-function gradients, shape (n_tri, 3, 2)."""
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 0):
        raise ValueError("Triangles must be counter-clockwise with positive area")
    grads = np.empty((triangles.shape[0], 3, 2))
    grads[:, 1, 0] = d2[:, 1] / det
    grads[:, 1, 1] = -d2[:, 0] / det
    grads[:, 2, 0] = -d1[:, 1] / det
    grads[:, 2, 1] = d1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return 0.5 * det, grads


def element_stiffness(vertices: np.ndarray, a: float = 1.0) -> np.ndarray:
    """Element stiffness matrix of a single triangle with constant coefficient a."""
    areas, grads = triangle_gradients(np.asarray(vertices, dtype=float), np.array([[0, 1, 2]]))
    return a * areas[0] * grads[0] @ grads[0].T


def _scatter(triangles: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()


def coefficient_samples(mesh: MeshHierarchy, a: Union[CoefficientField, float, np.ndarray]) -> np.ndarray:
    if isinstance(a, CoefficientField):
        return a.sample_on_triangles(mesh)
    values = np.broadcast_to(np.asarray(a, dtype=float), (mesh.n_fine_triangles,)).copy()
    bad = np.flatnonzero(~np.isfinite(values) | (values <= 0))
    if bad.size:
        raise ValueError(f"Non-positive coefficient sample {values[bad[0]]} at fine triangle {int(bad[0])}")
    return values


def assemble_stiffness(mesh: MeshHierarchy, a: Union[CoefficientField, float, np.ndarray]) -> SparseOperator:
    """a(y, v) = int a grad y . grad v with a constant per fine triangle."""
    samples = coefficient_samples(mesh, a)
    areas, grads = triangle_gradients(mesh.fine_nodes, mesh.fine_triangles)
    local = (samples * areas)[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    n = mesh.n_fine_nodes
    full = _scatter(mesh.fine_triangles, local, (n, n))
    free = mesh.interior_fine_nodes
    return SparseOperator(full, free, free, "stiffness", coefficient_samples=samples)


def assemble_mass(mesh: MeshHierarchy) -> SparseOperator:
    """P1 mass matrix: |T|/6 on the diagonal, |T|/12 off it."""
    areas = mesh.fine_areas
    pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = areas[:, None, None] * pattern[None]
    n = mesh.n_fine_nodes
    full = _scatter(mesh.fine_triangles, local, (n, n))
    free = mesh.interior_fine_nodes
    return SparseOperator(full, free, free, "mass")


def control_areas(mesh: MeshHierarchy, level: ControlLevel) -> np.ndarray:
    if level == "fine":
        return mesh.fine_areas
    if level == "coarse":
        return mesh.coarse_areas
    raise ValueError(f"Unknown control level '{level}' (expected 'fine' or 'coarse')")


def assemble_control_mass(mesh: MeshHierarchy, level: ControlLevel = "fine") -> SparseOperator:
    """Mass matrix of piecewise constants: diagonal with the cell areas."""
    areas = control_areas(mesh, level)
    cells = np.arange(areas.size)
    return SparseOperator(sp.diags(areas).tocsr(), cells, cells, f"control-mass-{level}")


def prolongation_matrix(mesh: MeshHierarchy) -> sp.csr_matrix:
    """R: coarse piecewise constants -> fine piecewise constants (R[k, parent(k)] = 1)."""
    n_fine = mesh.n_fine_triangles
    return sp.csr_matrix(
        (np.ones(n_fine), (np.arange(n_fine), mesh.parent_map)),
        shape=(n_fine, mesh.n_coarse_triangles),
    )


def assemble_control_coupling(
    mesh: MeshHierarchy, B: Optional[ControlOperator] = None, level: ControlLevel = "fine"
) -> SparseOperator:
    """D[i, k] = int B 1_{cell k} phi_i, P1 nodes x control cells."""
    B = B or ControlOperator()
    weights = B.sample(mesh.fine_barycenters()) * mesh.fine_areas / 3.0
    n_tri = mesh.n_fine_triangles
    rows = mesh.fine_triangles.ravel()
    cols = np.repeat(np.arange(n_tri), 3)
    fine = sp.coo_matrix((np.repeat(weights, 3), (rows, cols)), shape=(mesh.n_fine_nodes, n_tri)).tocsr()
    if level == "fine":
        full = fine
    elif level == "coarse":
        full = fine @ prolongation_matrix(mesh)
    else:
        raise ValueError(f"Unknown control level '{level}' (expected 'fine' or 'coarse')")
    cells = np.arange(full.shape[1])
    return SparseOperator(full, mesh.interior_fine_nodes, cells, f"coupling-{level}", symmetric=False)


def evaluate_field(points: np.ndarray, spec: FieldSpec, n_expected: int, name: str) -> np.ndarray:
    if callable(spec):
        values = np.broadcast_to(spec(points[:, 0], points[:, 1]), (points.shape[0],)).astype(float)
    else:
        values = np.asarray(spec, dtype=float)
        if values.ndim == 0:
            values = np.full(points.shape[0], float(values))
    if values.shape != (n_expected,):
        raise ValueError(f"{name} has {values.size} values, expected {n_expected}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} is not finite everywhere")
    return values


def interpolate(mesh: MeshHierarchy, spec: FieldSpec) -> np.ndarray:
    """Nodal interpolant on the fine mesh (arrays are taken as nodal values)."""
    return evaluate_field(mesh.fine_nodes, spec, mesh.n_fine_nodes, "nodal field")


def assemble_load(mesh: MeshHierarchy, f: FieldSpec, mass: Optional[SparseOperator] = None) -> np.ndarray:
    """Load vector (f, phi_i): barycenter quadrature for functions and constants, mass product for nodal arrays."""
    if isinstance(f, np.ndarray) and f.shape == (mesh.n_fine_nodes,):
        mass = mass or assemble_mass(mesh)
        load = mass.full @ evaluate_field(mesh.fine_nodes, f, mesh.n_fine_nodes, "forcing")
    else:
        values = evaluate_field(mesh.fine_barycenters(), f, mesh.n_fine_triangles, "forcing")
        load = np.bincount(
            mesh.fine_triangles.ravel(),
            weights=np.repeat(values * mesh.fine_areas / 3.0, 3),
            minlength=mesh.n_fine_nodes,
        )
    load[mesh.boundary_mask] = 0.0
    return load


def element_energies(mesh: MeshHierarchy, samples: np.ndarray, z: np.ndarray) -> np.ndarray:
    """a_T |T| |grad z|^2 on every fine triangle."""
    areas, grads = triangle_gradients(mesh.fine_nodes, mesh.fine_triangles)
    grad_z = np.einsum("tik,ti->tk", grads, z[mesh.fine_triangles])
    return samples * areas * np.einsum("tk,tk->t", grad_z, grad_z)
