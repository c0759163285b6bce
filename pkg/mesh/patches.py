"""Layered coarse patches used to localize basis functions."""
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from mesh.hierarchy import MeshHierarchy


class PatchDescriptor(BaseModel):
    """Union of coarse triangles grown `layers` times around a node or triangle."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    center: int
    center_kind: Literal["node", "triangle"]
    layers: int
    triangles: np.ndarray
    interior_fine_dofs: np.ndarray

    @property
    def triangle_set(self) -> frozenset:
        return frozenset(int(t) for t in self.triangles)

    def covers(self, mesh: MeshHierarchy) -> bool:
        return self.triangles.size == mesh.n_coarse_triangles


def _triangles_touching(mesh: MeshHierarchy, nodes: np.ndarray) -> np.ndarray:
    incidence = mesh.coarse_incidence
    mask = np.zeros(mesh.n_coarse_nodes, dtype=bool)
    mask[nodes] = True
    hits = incidence @ mask.astype(np.int32)
    return np.flatnonzero(hits > 0)


def _grow(mesh: MeshHierarchy, triangles: np.ndarray, times: int) -> np.ndarray:
    """Add every coarse triangle sharing at least a vertex with the patch, `times` times."""
    for _ in range(times):
        if triangles.size == mesh.n_coarse_triangles:
            break
        nodes = np.unique(mesh.coarse_triangles[triangles])
        triangles = _triangles_touching(mesh, nodes)
    return triangles


def interior_fine_dofs(mesh: MeshHierarchy, triangles: np.ndarray) -> np.ndarray:
    """Fine nodes strictly inside the union of coarse `triangles`, excluding the boundary of Omega."""
    inside = np.zeros(mesh.n_coarse_triangles, dtype=bool)
    inside[triangles] = True
    fine_inside = inside[mesh.parent_map]

    touched_in = np.zeros(mesh.n_fine_nodes, dtype=bool)
    touched_in[mesh.fine_triangles[fine_inside].ravel()] = True
    touched_out = np.zeros(mesh.n_fine_nodes, dtype=bool)
    touched_out[mesh.fine_triangles[~fine_inside].ravel()] = True

    return np.flatnonzero(touched_in & ~touched_out & ~mesh.boundary_mask)


def _check_layers(layers: int) -> None:
    if layers < 1:
        raise ValueError(f"Number of layers must be >= 1, got {layers}")


def node_patch(mesh: MeshHierarchy, node: int, layers: int) -> PatchDescriptor:
    """Patch around interior coarse node `node`: incident triangles, then layers-1 vertex expansions."""
    _check_layers(layers)
    if not 0 <= node < mesh.n_coarse_nodes:
        raise ValueError(f"Coarse node index {node} out of range [0, {mesh.n_coarse_nodes})")
    if mesh.coarse_boundary_mask[node]:
        raise ValueError(f"Coarse node {node} lies on the boundary and cannot center an RPS patch")

    triangles = _triangles_touching(mesh, np.array([node]))
    triangles = _grow(mesh, triangles, layers - 1)
    return PatchDescriptor(
        center=int(node),
        center_kind="node",
        layers=layers,
        triangles=triangles,
        interior_fine_dofs=interior_fine_dofs(mesh, triangles),
    )


def triangle_patch(mesh: MeshHierarchy, triangle: int, layers: int) -> PatchDescriptor:
    """Patch around coarse triangle `triangle`: vertex neighbours, then layers-1 vertex expansions."""
    _check_layers(layers)
    if not 0 <= triangle < mesh.n_coarse_triangles:
        raise ValueError(
            f"Coarse triangle index {triangle} out of range [0, {mesh.n_coarse_triangles})"
        )

    triangles = _grow(mesh, np.array([triangle]), layers)
    return PatchDescriptor(
        center=int(triangle),
        center_kind="triangle",
        layers=layers,
        triangles=triangles,
        interior_fine_dofs=interior_fine_dofs(mesh, triangles),
    )


def full_patch(mesh: MeshHierarchy, center: int, center_kind: str) -> PatchDescriptor:
    """Whole-domain patch used by global bases."""
    triangles = np.arange(mesh.n_coarse_triangles)
    return PatchDescriptor(
        center=int(center),
        center_kind=center_kind,
        layers=max(mesh.nx, mesh.ny) + 1,
        triangles=triangles,
        interior_fine_dofs=mesh.interior_fine_nodes,
    )

