"""Measurement functionals defining the coarse degrees of freedom."""
import logging
from typing import Literal

import numpy as np
import scipy.sparse as sp

from mesh.hierarchy import MeshHierarchy

logger = logging.getLogger(__name__)

BasisKind = Literal["rps", "grps"]


class MeasurementSet:
    """Constraint matrix C (N x fine nodes) and the coarse entity behind each row."""

    def __init__(self, kind: str, C: sp.csr_matrix, support_map: np.ndarray, basis_kind: BasisKind):
        self.kind = kind
        self.basis_kind = basis_kind
        self.C = C.tocsr()
        self.support_map = support_map

    @property
    def N(self) -> int:
        return self.C.shape[0]

    def apply(self, z: np.ndarray) -> np.ndarray:
        return self.C @ z

    def rows_in_patch(self, mesh: MeshHierarchy, patch) -> np.ndarray:
        """Measurements whose coarse entity lies inside the patch."""
        if self.basis_kind == "grps":
            inside = np.zeros(mesh.n_coarse_triangles, dtype=bool)
            inside[patch.triangles] = True
            return np.flatnonzero(inside[self.support_map])
        interior = np.zeros(mesh.n_fine_nodes, dtype=bool)
        interior[patch.interior_fine_dofs] = True
        return np.flatnonzero(interior[mesh.coarse_to_fine_node[self.support_map]])


def _nodal(mesh: MeshHierarchy) -> MeasurementSet:
    centers = mesh.interior_coarse_nodes
    n = centers.size
    C = sp.csr_matrix(
        (np.ones(n), (np.arange(n), mesh.coarse_to_fine_node[centers])),
        shape=(n, mesh.n_fine_nodes),
    )
    return MeasurementSet("rps-nodal", C, centers, "rps")


def _volume(mesh: MeshHierarchy) -> MeasurementSet:
    # row T: (1/|T|) int_T phi_j, exact for P1 hats (|t|/3 per fine vertex)
    weights = mesh.fine_areas / 3.0 / mesh.coarse_areas[mesh.parent_map]
    rows = np.repeat(mesh.parent_map, 3)
    cols = mesh.fine_triangles.ravel()
    C = sp.coo_matrix(
        (np.repeat(weights, 3), (rows, cols)),
        shape=(mesh.n_coarse_triangles, mesh.n_fine_nodes),
    ).tocsr()
    return MeasurementSet("grps-volume", C, np.arange(mesh.n_coarse_triangles), "grps")


def build_measurements(mesh: MeshHierarchy, kind: str) -> MeasurementSet:
    """RPS nodal point values ('rps') or GRPS coarse-triangle averages ('grps')."""
    kind = {"rps-nodal": "rps", "grps-volume": "grps"}.get(kind, kind)
    if kind == "rps":
        measurements = _nodal(mesh)
    elif kind == "grps":
        measurements = _volume(mesh)
    else:
        raise ValueError(f"Unknown basis kind '{kind}' (expected 'rps' or 'grps')")
    logger.info(f"Built {measurements.kind} measurements: N={measurements.N}")
    return measurements


def coarse_dof(nc: int, kind: str) -> int:
    """Coarse space dimension on an Nc x Nc unit-square mesh."""
    return (nc - 1) ** 2 if kind == "rps" else 2 * nc**2
