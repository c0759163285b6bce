"""Error norms on the fine space and the averaging projection onto coarse controls."""
from typing import Tuple

import numpy as np

from fem.assembly import SparseOperator
from mesh.hierarchy import MeshHierarchy


def _quadratic(op: SparseOperator, v: np.ndarray) -> float:
    return float(v @ (op.full @ v))


def norms(z: np.ndarray, laplace: SparseOperator, mass: SparseOperator) -> Tuple[float, float, float]:
    """(L2, full H1, Linf) norms of a fine nodal vector; `laplace` is the unweighted stiffness."""
    l2sq = max(_quadratic(mass, z), 0.0)
    h1sq = l2sq + max(_quadratic(laplace, z), 0.0)
    return float(np.sqrt(l2sq)), float(np.sqrt(h1sq)), float(np.max(np.abs(z))) if z.size else 0.0


def error_norms(
    z_ref: np.ndarray,
    z: np.ndarray,
    mesh: MeshHierarchy,
    laplace: SparseOperator,
    mass: SparseOperator,
) -> Tuple[float, float, float]:
    """Relative (L2, H1, Linf) errors of z against z_ref on the fine space."""
    n = mesh.n_fine_nodes
    if z_ref.shape != (n,) or z.shape != (n,):
        raise ValueError(f"Both vectors must live on the fine space with {n} nodes")
    ref = norms(z_ref, laplace, mass)
    if min(ref) <= 0:
        raise ValueError("Reference vector has zero norm; relative errors are undefined")
    err = norms(z - z_ref, laplace, mass)
    return err[0] / ref[0], err[1] / ref[1], err[2] / ref[2]


def control_norm(u: np.ndarray, control_mass: SparseOperator) -> float:
    """L2 norm of a piecewise-constant control."""
    return float(np.sqrt(max(_quadratic(control_mass, u), 0.0)))


def relative_control_error(u_ref: np.ndarray, u: np.ndarray, control_mass: SparseOperator) -> float:
    ref = control_norm(u_ref, control_mass)
    err = control_norm(u - u_ref, control_mass)
    if ref == 0:
        return err
    return err / ref


def project_average(v: np.ndarray, mesh: MeshHierarchy) -> np.ndarray:
    """Pi_H: area-weighted mean of fine cell values over each coarse cell."""
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_fine_triangles,):
        raise ValueError(
            f"Expected one value per fine cell ({mesh.n_fine_triangles}), got shape {v.shape}"
        )
    integral = np.bincount(mesh.parent_map, weights=v * mesh.fine_areas, minlength=mesh.n_coarse_triangles)
    return integral / mesh.coarse_areas
