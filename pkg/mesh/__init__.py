"""Mesh package."""
from mesh.hierarchy import MeshHierarchy, Rectangle, UNIT_SQUARE, build_hierarchy
from mesh.patches import PatchDescriptor, node_patch, triangle_patch, full_patch

__all__ = [
    "MeshHierarchy",
    "Rectangle",
    "UNIT_SQUARE",
    "build_hierarchy",
    "PatchDescriptor",
    "node_patch",
    "triangle_patch",
    "full_patch",
]
