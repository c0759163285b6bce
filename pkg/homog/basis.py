"""RPS / GRPS coarse bases as energy-minimizing constrained fine-space functions.

Each basis function solves

    minimize  phi^T A phi   subject to  C phi = e_i

through the saddle-point system [A C^T; C 0] (phi, lam) = (0, e_i). The global
basis uses the whole interior; the localized basis restricts the unknowns to
the interior fine DOFs of a layered coarse patch and keeps only the
measurements whose coarse entity lies inside it.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from config.settings import settings
from fem.assembly import SparseOperator
from fem.solve import factorize
from homog.measurements import MeasurementSet
from mesh.hierarchy import MeshHierarchy
from mesh.patches import PatchDescriptor, node_patch, triangle_patch

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-8


class CoarseBasis:
    """N fine-space vectors stored as the columns of a sparse matrix Phi."""

    def __init__(
        self,
        kind: str,
        matrix: sp.spmatrix,
        measurements: MeasurementSet,
        stiffness: SparseOperator,
        layers: Optional[int] = None,
        patches: Optional[List[PatchDescriptor]] = None,
        indices: Optional[np.ndarray] = None,
    ):
        self.kind = kind
        self.matrix = sp.csc_matrix(matrix)
        self.measurements = measurements
        self.stiffness = stiffness
        self.layers = layers
        self.patches = patches
        self.indices = np.arange(self.matrix.shape[1]) if indices is None else np.asarray(indices)

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_global(self) -> bool:
        return self.layers is None

    def vector(self, column: int) -> np.ndarray:
        return self.matrix[:, column].toarray().ravel()

    def prolong(self, coeffs: np.ndarray) -> np.ndarray:
        return self.matrix @ coeffs

    def interpolant(self, z: np.ndarray) -> np.ndarray:
        """Optimal recovery z_I = sum_i (C z)_i phi_i (complete bases only)."""
        if self.N != self.measurements.N:
            raise ValueError("Interpolant needs the complete basis, not a subset")
        return self.matrix @ (self.measurements.C @ z)

    def constraint_defect(self) -> float:
        """max |C Phi - I| over the computed columns."""
        product = (self.measurements.C @ self.matrix).toarray()
        target = np.zeros_like(product)
        target[self.indices, np.arange(self.N)] = 1.0
        return float(np.max(np.abs(product - target))) if product.size else 0.0

    def energy_norms(self) -> np.ndarray:
        A = self.stiffness.full
        return np.sqrt(np.maximum(np.asarray((self.matrix.multiply(A @ self.matrix)).sum(axis=0)).ravel(), 0.0))

    def energy_distance(self, other: "CoarseBasis") -> np.ndarray:
        """||phi_i - psi_i||_A column by column."""
        if self.matrix.shape != other.matrix.shape:
            raise ValueError(f"Basis shapes differ: {self.matrix.shape} vs {other.matrix.shape}")
        diff = sp.csc_matrix(self.matrix - other.matrix)
        A = self.stiffness.full
        return np.sqrt(np.maximum(np.asarray(diff.multiply(A @ diff).sum(axis=0)).ravel(), 0.0))

    def __repr__(self) -> str:
        loc = "global" if self.is_global else f"l={self.layers}"
        return f"CoarseBasis({self.kind}, N={self.N}, {loc}, nnz={self.matrix.nnz})"


def default_layers(nc: int, factor: Optional[float] = None) -> int:
    """l = ceil(c * log2(Nc)), at least one layer."""
    factor = settings.homog_layer_factor if factor is None else factor
    return max(1, int(math.ceil(factor * math.log2(max(nc, 2)))))


def _saddle_matrix(A_block: sp.spmatrix, C_block: sp.spmatrix) -> sp.csc_matrix:
    return sp.bmat([[A_block, C_block.T], [C_block, None]], format="csc")


def _dependent_measurement(C_block: sp.spmatrix) -> Optional[int]:
    """Position of the first row that is linearly dependent on the others, if any."""
    gram = (C_block @ C_block.T).toarray()
    if gram.size == 0:
        return None
    _, r, piv = sla.qr(gram, pivoting=True, mode="economic")
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > 1e-12 * max(diag[0], 1e-300)))
    return int(piv[rank]) if rank < gram.shape[0] else None


def _describe(measurements: MeasurementSet, j: int) -> str:
    return f"Measurement {j} (coarse entity {int(measurements.support_map[j])})"


def _check_measurements(C_block: sp.spmatrix, measurements: MeasurementSet, rows: np.ndarray) -> None:
    """Every row needs interior support and the rows must be linearly independent."""
    empty = np.flatnonzero(np.diff(sp.csr_matrix(C_block).indptr) == 0)
    if empty.size:
        raise ValueError(
            f"{_describe(measurements, int(rows[empty[0]]))} has no interior fine DOF in its support; "
            f"refine the fine mesh"
        )
    dependent = _dependent_measurement(C_block)
    if dependent is not None:
        raise ValueError(
            f"{_describe(measurements, int(rows[dependent]))} is linearly dependent on the other measurements; "
            f"the constraint matrix is rank deficient (refine the fine mesh)"
        )


def compute_global_basis(
    A: SparseOperator,
    measurements: MeasurementSet,
    indices: Optional[Sequence[int]] = None,
    block: Optional[int] = None,
) -> CoarseBasis:
    """All (or the selected) global basis functions from one factorization of the saddle system."""
    free = A.row_dofs
    n_free, N = free.size, measurements.N
    C_block = measurements.C[:, free]
    all_rows = np.arange(N)
    _check_measurements(C_block, measurements, all_rows)

    try:
        lu = factorize(_saddle_matrix(A.matrix, C_block), "global saddle-point system")
    except RuntimeError as exc:
        raise ValueError(f"Global saddle-point system for {measurements.kind} is singular: {exc}") from exc

    indices = all_rows if indices is None else np.asarray(indices, dtype=np.int64)
    block = block or settings.homog_rhs_block
    injection = sp.csr_matrix((np.ones(n_free), (free, np.arange(n_free))), shape=(A.full.shape[0], n_free))

    columns = []
    for start in range(0, indices.size, block):
        chunk = indices[start:start + block]
        rhs = np.zeros((n_free + N, chunk.size))
        rhs[n_free + chunk, np.arange(chunk.size)] = 1.0
        sol = lu.solve(rhs)
        columns.append(sp.csc_matrix(sol[:n_free]))
        logger.debug(f"Global basis: solved columns {start}..{start + chunk.size - 1} of {indices.size}")

    phi = injection @ sp.hstack(columns, format="csc") if columns else sp.csc_matrix((A.full.shape[0], 0))
    basis = CoarseBasis(measurements.basis_kind, phi, measurements, A, layers=None, indices=indices)
    _check_column_defects(basis)
    logger.info(f"Computed global {basis.kind} basis: {basis.N} of {N} functions")
    return basis


def _check_column_defects(basis: CoarseBasis) -> None:
    """Raise when some column misses C phi_i = e_i by more than CONSTRAINT_TOL."""
    if basis.N == 0:
        return
    product = (basis.measurements.C @ basis.matrix).toarray()
    product[basis.indices, np.arange(basis.N)] -= 1.0
    defects = np.max(np.abs(product), axis=0)
    worst = int(np.argmax(defects))
    if not defects[worst] <= CONSTRAINT_TOL:
        j = int(basis.indices[worst])
        raise ValueError(
            f"{_describe(basis.measurements, j)}: basis function violates its constraints "
            f"(defect {defects[worst]:.3e} > {CONSTRAINT_TOL:g})"
        )
    logger.debug(f"Constraint defect of {basis!r}: {defects[worst]:.2e}")


def _local_problem(
    A: SparseOperator,
    measurements: MeasurementSet,
    mesh: MeshHierarchy,
    index: int,
    layers: int,
) -> Tuple[PatchDescriptor, np.ndarray]:
    entity = int(measurements.support_map[index])
    if measurements.basis_kind == "rps":
        patch = node_patch(mesh, entity, layers)
    else:
        patch = triangle_patch(mesh, entity, layers)

    dofs = patch.interior_fine_dofs
    if dofs.size == 0:
        raise ValueError(f"Patch of measurement {index} (l={layers}) has no interior fine DOFs")

    rows = measurements.rows_in_patch(mesh, patch)
    position = np.flatnonzero(rows == index)
    if position.size != 1:
        raise ValueError(f"Measurement {index} is not supported inside its own patch (l={layers})")

    A_loc = A.full[dofs][:, dofs]
    C_loc = measurements.C[rows][:, dofs]
    _check_measurements(C_loc, measurements, rows)
    try:
        lu = factorize(_saddle_matrix(A_loc, C_loc), f"local saddle system of measurement {index}")
    except RuntimeError as exc:
        raise ValueError(f"Infeasible local constraints for measurement {index} (l={layers}): {exc}") from exc

    rhs = np.zeros(dofs.size + rows.size)
    rhs[dofs.size + position[0]] = 1.0
    values = lu.solve(rhs)[:dofs.size]

    residual = C_loc @ values
    residual[position[0]] -= 1.0
    defect = float(np.max(np.abs(residual)))
    if not defect <= CONSTRAINT_TOL:
        raise ValueError(
            f"{_describe(measurements, index)}: local constraints not met on its l={layers} patch "
            f"(defect {defect:.3e} > {CONSTRAINT_TOL:g})"
        )
    return patch, values


def compute_local_basis(
    A: SparseOperator,
    measurements: MeasurementSet,
    mesh: MeshHierarchy,
    kind: Optional[str],
    layers: int,
    workers: Optional[int] = None,
    indices: Optional[Sequence[int]] = None,
) -> CoarseBasis:
    """Localized basis on `layers`-layer patches; patch problems are independent.

    `indices` restricts the computation to selected measurements; column j then
    belongs to measurement indices[j].
    """
    if kind is not None and kind != measurements.basis_kind:
        raise ValueError(f"Basis kind '{kind}' does not match measurements of kind '{measurements.kind}'")
    if layers < 1:
        raise ValueError(f"Number of layers must be >= 1, got {layers}")
    workers = workers or settings.homog_workers

    def solve_one(i: int):
        return _local_problem(A, measurements, mesh, i, layers)

    indices = np.arange(measurements.N) if indices is None else np.asarray(indices, dtype=np.int64)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_one, indices.tolist()))
    else:
        results = [solve_one(i) for i in indices.tolist()]

    patches = [patch for patch, _ in results]
    rows = np.concatenate([p.interior_fine_dofs for p in patches]) if patches else np.zeros(0, dtype=np.int64)
    cols = np.concatenate([np.full(p.interior_fine_dofs.size, i) for i, p in enumerate(patches)]) if patches else rows
    data = np.concatenate([values for _, values in results]) if results else np.zeros(0)
    phi = sp.csc_matrix((data, (rows, cols)), shape=(mesh.n_fine_nodes, indices.size))

    basis = CoarseBasis(
        measurements.basis_kind, phi, measurements, A, layers=layers, patches=patches, indices=indices
    )
    logger.info(
        f"Computed localized {basis.kind} basis: {basis.N} of {measurements.N} functions, l={layers}, "
        f"mean patch size {np.mean([p.interior_fine_dofs.size for p in patches]):.0f} fine DOFs"
    )
    return basis


def build_basis(
    A: SparseOperator,
    measurements: MeasurementSet,
    mesh: MeshHierarchy,
    layers: Optional[int] = None,
) -> CoarseBasis:
    """Global basis when `layers` is None, localized otherwise."""
    if layers is None:
        return compute_global_basis(A, measurements)
    return compute_local_basis(A, measurements, mesh, measurements.basis_kind, layers)


def identity_basis(mesh: MeshHierarchy, A: SparseOperator) -> CoarseBasis:
    """Phi = injection of the interior fine nodes; turns the coarse pipeline into the fine one."""
    free = mesh.interior_fine_nodes
    phi = sp.csc_matrix((np.ones(free.size), (free, np.arange(free.size))), shape=(mesh.n_fine_nodes, free.size))
    measurements = MeasurementSet("fine-nodal", phi.T.tocsr(), free, "rps")
    return CoarseBasis("identity", phi, measurements, A, layers=None)


def galerkin_solve(basis: CoarseBasis, A: SparseOperator, load: np.ndarray) -> np.ndarray:
    """Coarse Galerkin solution of a(z, v) = (rho, v) in span(Phi), returned on the fine space."""
    S = (basis.matrix.T @ A.full @ basis.matrix).tocsc()
    F = basis.matrix.T @ load
    coeffs = factorize(S, "coarse stiffness").solve(np.asarray(F, dtype=float))
    return basis.prolong(coeffs)
