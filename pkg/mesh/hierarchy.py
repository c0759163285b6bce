"""Nested structured triangulations of a rectangle.

The coarse mesh splits each of the Nc x Nc (or nx x ny for rectangles) squares
along the (1,1) diagonal. J red refinements of that mesh coincide with the
same structured split on a grid 2^J times finer, so the fine level is built
directly on the fine grid and linked to its coarse ancestors arithmetically.
"""
import logging
from functools import cached_property
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, model_validator

logger = logging.getLogger(__name__)


class Rectangle(BaseModel):
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    model_config = ConfigDict(frozen=True)

    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    @model_validator(mode="after")
    def _check_extent(self) -> "Rectangle":
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(
                f"Degenerate rectangle [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]"
            )
        return self

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.width, self.height))

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x0, self.x1, self.y0, self.y1)


UNIT_SQUARE = Rectangle()


def axis_cells(domain: Rectangle, nc: int) -> Tuple[int, int]:
    """Cells per axis: Nc on the shorter side, round(aspect * Nc) on the longer."""
    if domain.width >= domain.height:
        return max(1, int(round(domain.width / domain.height * nc))), nc
    return nc, max(1, int(round(domain.height / domain.width * nc)))


def _grid_triangulation(domain: Rectangle, nx: int, ny: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major nodes and (square, lower, upper) ordered triangles."""
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return nodes, triangles


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = nodes[triangles[:, 0]]
    d1 = nodes[triangles[:, 1]] - p0
    d2 = nodes[triangles[:, 2]] - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


class MeshHierarchy:
    """Coarse triangulation T_H with its J-times refined fine triangulation T_h."""

    def __init__(self, domain: Rectangle, nc: int, levels: int):
        self.domain = domain
        self.nc = nc
        self.levels = levels
        self.nx, self.ny = axis_cells(domain, nc)
        factor = 2 ** levels
        self.fine_nx, self.fine_ny = self.nx * factor, self.ny * factor

        self.coarse_nodes, self.coarse_triangles = _grid_triangulation(domain, self.nx, self.ny)
        self.fine_nodes, self.fine_triangles = _grid_triangulation(domain, self.fine_nx, self.fine_ny)

        self.coarse_areas = signed_areas(self.coarse_nodes, self.coarse_triangles)
        self.fine_areas = signed_areas(self.fine_nodes, self.fine_triangles)

        self.parent_map = self._build_parent_map(factor)
        self.coarse_to_fine_node = self._build_node_map(factor)
        self.boundary_mask = self._boundary(self.fine_nodes)
        self.coarse_boundary_mask = self._boundary(self.coarse_nodes)

        hx, hy = domain.width / self.nx, domain.height / self.ny
        self.H = max(hx, hy)
        self.h = self.H / factor

    def _build_parent_map(self, factor: int) -> np.ndarray:
        t = np.arange(self.fine_triangles.shape[0])
        square, is_upper = t // 2, t % 2
        fi, fj = square % self.fine_nx, square // self.fine_nx
        ci, cj = fi // factor, fj // factor
        a, b = fi % factor, fj % factor
        # fine lower lies in coarse lower iff b <= a; fine upper in coarse upper iff a <= b
        coarse_upper = np.where(is_upper == 0, b > a, a <= b)
        return (2 * (cj * self.nx + ci) + coarse_upper.astype(np.int64)).astype(np.int64)

    def _build_node_map(self, factor: int) -> np.ndarray:
        n = np.arange(self.coarse_nodes.shape[0])
        ci, cj = n % (self.nx + 1), n // (self.nx + 1)
        return (cj * factor) * (self.fine_nx + 1) + ci * factor

    def _boundary(self, nodes: np.ndarray) -> np.ndarray:
        tol = 1e-12 * max(self.domain.width, self.domain.height)
        d = self.domain
        return (
            (np.abs(nodes[:, 0] - d.x0) < tol)
            | (np.abs(nodes[:, 0] - d.x1) < tol)
            | (np.abs(nodes[:, 1] - d.y0) < tol)
            | (np.abs(nodes[:, 1] - d.y1) < tol)
        )

    @cached_property
    def coarse_incidence(self) -> sp.csr_matrix:
        """Coarse triangle x coarse node incidence matrix."""
        n_tri = self.coarse_triangles.shape[0]
        rows = np.repeat(np.arange(n_tri), 3)
        data = np.ones(rows.size, dtype=np.int32)
        return sp.csr_matrix(
            (data, (rows, self.coarse_triangles.ravel())), shape=(n_tri, self.coarse_nodes.shape[0])
        )

    @property
    def n_coarse_nodes(self) -> int:
        return self.coarse_nodes.shape[0]

    @property
    def n_coarse_triangles(self) -> int:
        return self.coarse_triangles.shape[0]

    @property
    def n_fine_nodes(self) -> int:
        return self.fine_nodes.shape[0]

    @property
    def n_fine_triangles(self) -> int:
        return self.fine_triangles.shape[0]

    @property
    def interior_fine_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @property
    def interior_coarse_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.coarse_boundary_mask)

    def fine_barycenters(self) -> np.ndarray:
        return self.fine_nodes[self.fine_triangles].mean(axis=1)

    def coarse_barycenters(self) -> np.ndarray:
        return self.coarse_nodes[self.coarse_triangles].mean(axis=1)

    def fine_row_nodes(self, y: float) -> np.ndarray:
        """Fine node indices on the grid row nearest to height y, ordered by x."""
        row = int(round((y - self.domain.y0) / self.domain.height * self.fine_ny))
        row = min(max(row, 0), self.fine_ny)
        return row * (self.fine_nx + 1) + np.arange(self.fine_nx + 1)

    def nearest_coarse_node(self, x: float, y: float, interior: bool = True) -> int:
        candidates = self.interior_coarse_nodes if interior else np.arange(self.n_coarse_nodes)
        d = np.hypot(self.coarse_nodes[candidates, 0] - x, self.coarse_nodes[candidates, 1] - y)
        return int(candidates[np.argmin(d)])

    def nearest_coarse_triangle(self, x: float, y: float) -> int:
        centers = self.coarse_barycenters()
        return int(np.argmin(np.hypot(centers[:, 0] - x, centers[:, 1] - y)))

    def summary(self) -> str:
        return (
            f"{self.nx}x{self.ny} coarse squares, J={self.levels}, "
            f"H={self.H:.6g}, h={self.h:.6g}, "
            f"{self.n_fine_nodes} fine nodes / {self.n_fine_triangles} fine triangles"
        )


def build_hierarchy(domain: Rectangle = UNIT_SQUARE, nc: int = 4, levels: int = 0) -> MeshHierarchy:
    """Build the coarse mesh of `domain` and its `levels`-times refined fine mesh."""
    if not isinstance(nc, (int, np.integer)) or nc < 1:
        raise ValueError(f"Nc must be an integer >= 1, got {nc!r}")
    if not isinstance(levels, (int, np.integer)) or levels < 0:
        raise ValueError(f"J must be an integer >= 0, got {levels!r}")

    mesh = MeshHierarchy(domain, int(nc), int(levels))
    if np.any(mesh.fine_areas <= 0) or np.any(mesh.coarse_areas <= 0):
        raise RuntimeError("Triangulation produced a non-positive triangle area")
    logger.info(f"Built mesh hierarchy: {mesh.summary()}")
    return mesh
