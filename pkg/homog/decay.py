"""Decay diagnostics for coarse basis functions."""
import logging
from typing import Optional, Tuple

import numpy as np

from fem.assembly import element_energies
from homog.basis import CoarseBasis
from homog.measurements import MeasurementSet
from mesh.hierarchy import MeshHierarchy

logger = logging.getLogger(__name__)


def central_measurement(measurements: MeasurementSet, mesh: MeshHierarchy) -> int:
    """Measurement whose coarse entity is closest to the middle of the domain."""
    cx = 0.5 * (mesh.domain.x0 + mesh.domain.x1)
    cy = 0.5 * (mesh.domain.y0 + mesh.domain.y1)
    if measurements.basis_kind == "rps":
        entity = mesh.nearest_coarse_node(cx, cy)
    else:
        entity = mesh.nearest_coarse_triangle(cx, cy)
    hits = np.flatnonzero(measurements.support_map == entity)
    if hits.size == 0:
        raise ValueError(f"No measurement is attached to coarse entity {entity}")
    return int(hits[0])


def basis_center(basis: CoarseBasis, column: int, mesh: MeshHierarchy) -> np.ndarray:
    """Coarse node (RPS) or coarse triangle barycenter (GRPS) behind a basis column."""
    entity = int(basis.measurements.support_map[basis.indices[column]])
    if basis.measurements.basis_kind == "rps":
        return mesh.coarse_nodes[entity]
    return mesh.coarse_barycenters()[entity]


def decay_profile(
    basis: CoarseBasis,
    column: int,
    mesh: MeshHierarchy,
    radii: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Rows (r, tail fraction) with r = kH up to the domain diameter.

    The tail fraction is the share of the energy of phi whose fine triangles
    have their barycenter at distance >= r from the basis center.
    """
    samples = basis.stiffness.coefficient_samples
    if samples is None:
        raise ValueError("Stiffness operator carries no coefficient samples")

    energies = element_energies(mesh, samples, basis.vector(column))
    total = energies.sum()
    if total <= 0:
        raise ValueError(f"Basis function {column} has zero energy")

    center = basis_center(basis, column, mesh)
    distance = np.hypot(*(mesh.fine_barycenters() - center).T)

    if radii is None:
        k_max = int(np.ceil(mesh.domain.diameter / mesh.H))
        radii = mesh.H * np.arange(k_max + 1)

    order = np.argsort(distance)
    tail = np.concatenate([np.cumsum(energies[order][::-1])[::-1], [0.0]])
    fractions = tail[np.searchsorted(distance[order], radii, side="left")] / total
    return np.column_stack([radii, fractions])


def fit_decay_rate(profile: np.ndarray, rmin: float, rmax: float) -> Tuple[float, float, float]:
    """Least-squares fit log(fraction) = alpha - beta * r on [rmin, rmax]; returns (alpha, beta, R^2)."""
    r, fraction = profile[:, 0], profile[:, 1]
    keep = (r >= rmin - 1e-12) & (r <= rmax + 1e-12) & (fraction > 0)
    if np.count_nonzero(keep) < 2:
        raise ValueError(f"Need at least two positive profile points in [{rmin}, {rmax}] to fit a rate")

    x, y = r[keep], np.log(fraction[keep])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (intercept + slope * x)
    spread = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(residual**2) / spread if spread > 0 else 1.0
    logger.debug(f"Decay fit on [{rmin:.4g}, {rmax:.4g}]: beta={-slope:.4g}, R^2={r2:.4f}")
    return float(intercept), float(-slope), float(r2)


def basis_slice(basis: CoarseBasis, column: int, mesh: MeshHierarchy) -> np.ndarray:
    """Rows (x, |phi|, log10 |phi|) along the fine grid row through the basis center."""
    center = basis_center(basis, column, mesh)
    nodes = mesh.fine_row_nodes(center[1])
    values = np.abs(basis.vector(column)[nodes])
    with np.errstate(divide="ignore"):
        logs = np.log10(values)
    return np.column_stack([mesh.fine_nodes[nodes, 0], values, logs])
